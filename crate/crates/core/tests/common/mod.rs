#![allow(dead_code)]

use episodic::window::labelling_from_mask;
use episodic::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reference parameter set used across the recovery checks.
pub fn theta0() -> ModelParams {
    ModelParams {
        alpha: 0.6,
        gamma: 0.5,
        mu1: 0.5,
        mu0: 0.5,
        rho1: OffspringGap::Exponential { rate: 10.0 },
        rho0: OffspringGap::Exponential { rate: 15.0 },
        hazard: HazardSpec::sinusoidal(vec![-2.0, -2.0, 2.0]).unwrap(),
    }
}

pub fn random_hazard<R: Rng>(rng: &mut R, bspline: bool) -> HazardSpec {
    if bspline {
        let knots = rng.random_range(6..=8);
        let beta = (0..knots - 1).map(|_| rng.random_range(-1.0..2.0)).collect();
        HazardSpec::bspline(knots, beta).unwrap()
    } else {
        let q = rng.random_range(1..=2);
        let mut beta = vec![rng.random_range(-1.0..2.0)];
        beta.extend((0..2 * q).map(|_| rng.random_range(-1.0..1.0)));
        HazardSpec::sinusoidal(beta).unwrap()
    }
}

pub fn random_offspring<R: Rng>(rng: &mut R, weibull: bool) -> OffspringGap {
    if weibull {
        OffspringGap::Weibull {
            shape: rng.random_range(0.5..2.0),
            scale: rng.random_range(0.02..0.5),
        }
    } else {
        OffspringGap::Exponential {
            rate: rng.random_range(1.0..30.0),
        }
    }
}

pub fn random_params<R: Rng>(rng: &mut R, bspline: bool, weibull: bool) -> ModelParams {
    ModelParams {
        alpha: rng.random_range(0.1..0.9),
        gamma: rng.random_range(0.05..2.0),
        mu1: rng.random_range(0.05..2.0),
        mu0: rng.random_range(0.05..2.0),
        rho1: random_offspring(rng, weibull),
        rho0: random_offspring(rng, weibull),
        hazard: random_hazard(rng, bspline),
    }
}

/// Window of `n` uniform events with random marks.
pub fn random_window<R: Rng>(rng: &mut R, n: usize) -> EventSequence {
    let start = rng.random_range(0.0..10.0);
    let len = rng.random_range(0.5..5.0);
    let mut times: Vec<f64> = (0..n).map(|_| start + rng.random_range(0.0..len)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let marks = times
        .iter()
        .map(|_| if rng.random::<bool>() { Mark::Original } else { Mark::Repost })
        .collect();
    EventSequence::new(start, start + len, times, marks).unwrap()
}

/// Posterior expectations by brute force over every labeling.
pub struct Enumerated {
    pub loglik: f64,
    pub parent_prob: Vec<f64>,
    pub episodes: f64,
    pub switches: f64,
    pub original_parents: f64,
    pub segments: [f64; 2],
    pub excess: [f64; 2],
    pub offspring: [f64; 2],
    pub offspring_gap: [f64; 2],
    pub offspring_log_gap: [f64; 2],
}

pub fn enumerate_stats(window: &EventSequence, params: &ModelParams) -> Enumerated {
    let n = window.len();
    assert!((1..=16).contains(&n));
    let labelings: Vec<LabelAssignment> = (0..1u32 << (n - 1)).map(|m| labelling_from_mask(n, m)).collect();
    let logs: Vec<f64> = labelings
        .iter()
        .map(|l| complete_log_density(window, l, params).unwrap())
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|v| (v - max).exp()).sum();
    let mut out = Enumerated {
        loglik: max + z.ln(),
        parent_prob: vec![0.0; n],
        episodes: 0.0,
        switches: 0.0,
        original_parents: 0.0,
        segments: [0.0; 2],
        excess: [0.0; 2],
        offspring: [0.0; 2],
        offspring_gap: [0.0; 2],
        offspring_log_gap: [0.0; 2],
    };
    for (labels, lf) in labelings.iter().zip(&logs) {
        let w = (lf - max).exp() / z;
        let d = decompose(window, labels).unwrap();
        out.episodes += w * d.episodes.len() as f64;
        for ep in &d.episodes {
            out.switches += w * (ep.segments.len() - 1) as f64;
            if window.marks()[ep.start] == Mark::Original {
                out.original_parents += w;
            }
            for seg in &ep.segments {
                out.segments[seg.mark.index()] += w;
                out.excess[seg.mark.index()] += w * (seg.len - 1) as f64;
            }
        }
        for (l, &p) in labels.labels.iter().enumerate() {
            if p {
                out.parent_prob[l] += w;
            } else {
                let z = window.marks()[l].index();
                out.offspring[z] += w;
                out.offspring_gap[z] += w * window.gap(l);
                out.offspring_log_gap[z] += w * window.gap(l).ln();
            }
        }
    }
    out
}

/// Optimal within-cluster sum of squares for k = 3. Optimal 1-D clusters are
/// contiguous in sorted order, so trying every pair of split points is exact.
pub fn optimal_three_means(values: &[f64]) -> f64 {
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let cost = |i: usize, j: usize| {
        let s = &x[i..j];
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    };
    let mut best = f64::INFINITY;
    for a in 1..n - 1 {
        for b in a + 1..n {
            best = best.min(cost(0, a) + cost(a, b) + cost(b, n));
        }
    }
    best
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
