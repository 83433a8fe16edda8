//! Starting values from a provisional threshold labeling.

use rand::Rng;

use crate::hazard::{HazardFamily, HazardSpec};
use crate::model::{decompose, LabelAssignment, Mark, ModelParams, OffspringFamily, OffspringGap};
use crate::window::WindowPartition;

use super::mstep::{clamp_alpha, clamp_rate};

/// Gaps above this quantile are treated as provisional parents.
const PARENT_QUANTILE: f64 = 0.75;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

/// Method-of-moments seed: events whose gap exceeds the upper quartile (and
/// the first event of each window) are parents; the remaining quantities are
/// read off the implied episodes.
pub fn moment_seed(partition: &WindowPartition, offspring: OffspringFamily, hazard: &HazardFamily) -> ModelParams {
    let mut gaps: Vec<f64> = partition.windows.iter().flat_map(|w| w.gaps()).collect();
    gaps.sort_by(f64::total_cmp);
    let threshold = quantile(&gaps, PARENT_QUANTILE);

    let mut episodes = 0usize;
    let mut original_parents = 0usize;
    let mut switches = 0usize;
    let mut segments = [0usize; 2];
    let mut excess = [0usize; 2];
    let mut short_gaps: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut exposure = 0.0;
    for w in &partition.windows {
        exposure += w.window_end() - w.window_start();
        if w.is_empty() {
            continue;
        }
        let labels: Vec<bool> = (0..w.len()).map(|l| l == 0 || w.gap(l) > threshold).collect();
        for (l, is_parent) in labels.iter().enumerate() {
            if !is_parent {
                short_gaps[w.marks()[l].index()].push(w.gap(l));
            }
        }
        let d = decompose(w, &LabelAssignment { labels }).expect("threshold labels are valid");
        for ep in &d.episodes {
            episodes += 1;
            if w.marks()[ep.start] == Mark::Original {
                original_parents += 1;
            }
            switches += ep.segments.len() - 1;
            for seg in &ep.segments {
                segments[seg.mark.index()] += 1;
                excess[seg.mark.index()] += seg.len - 1;
            }
        }
    }
    let episodes_f = episodes.max(1) as f64;
    let pooled = median(short_gaps.iter().flatten().copied().collect()).unwrap_or(0.01);
    let gap_for = |z: usize| median(short_gaps[z].clone()).unwrap_or(pooled).max(1e-6);
    let ratio = |num: usize, den: usize| if den == 0 { 0.5 } else { num as f64 / den as f64 };
    let parent_rate = (episodes as f64 / exposure.max(1e-9)).max(1e-6);
    ModelParams {
        alpha: clamp_alpha(ratio(original_parents, episodes).clamp(0.05, 0.95)),
        gamma: clamp_rate(switches as f64 / episodes_f),
        mu1: clamp_rate(ratio(excess[1], segments[1])),
        mu0: clamp_rate(ratio(excess[0], segments[0])),
        rho1: OffspringGap::with_mean(offspring, gap_for(1)),
        rho0: OffspringGap::with_mean(offspring, gap_for(0)),
        hazard: HazardSpec::constant(hazard.clone(), parent_rate),
    }
}

/// Random start: γ, μ and offspring parameters scaled by a log-uniform
/// factor spanning one decade around the seed.
pub fn perturb<R: Rng + ?Sized>(seed: &ModelParams, rng: &mut R) -> ModelParams {
    let mut factor = || 10f64.powf(rng.random_range(-0.5..0.5));
    let floor = |v: f64| v.max(0.05);
    let rho = |g: &OffspringGap, f: &mut dyn FnMut() -> f64| match *g {
        OffspringGap::Exponential { rate } => OffspringGap::Exponential { rate: clamp_rate(rate * f()) },
        OffspringGap::Weibull { shape, scale } => OffspringGap::Weibull {
            shape,
            scale: clamp_rate(scale * f()),
        },
    };
    let gamma = clamp_rate(floor(seed.gamma) * factor());
    let mu1 = clamp_rate(floor(seed.mu1) * factor());
    let mu0 = clamp_rate(floor(seed.mu0) * factor());
    let rho1 = rho(&seed.rho1, &mut factor);
    let rho0 = rho(&seed.rho0, &mut factor);
    ModelParams {
        alpha: clamp_alpha(rng.random_range(0.1..0.9)),
        gamma,
        mu1,
        mu0,
        rho1,
        rho0,
        hazard: seed.hazard.clone(),
    }
}
