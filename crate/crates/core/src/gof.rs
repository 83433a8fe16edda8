//! Goodness-of-fit diagnostics: gap-CDF simulation envelopes, posterior
//! weighted offspring-gap CDFs, and the time-rescaled parent check.
//!
//! Empirical CDFs are `F̂(v) = Σ w I(d < v) / Σ w`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventSequence, Mark, ModelParams};
use crate::simulate::{simulate_stream, Truncation};
use crate::window::WindowStats;

/// Default number of grid points.
pub const DEFAULT_GRID: usize = 200;
const Z95: f64 = 1.959_963_984_540_054;

/// Weighted empirical step CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCdf {
    values: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl StepCdf {
    pub fn weighted(mut data: Vec<(f64, f64)>) -> Self {
        data.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(data.len());
        for (_, w) in &data {
            acc += w;
            cumulative.push(acc);
        }
        StepCdf {
            values: data.into_iter().map(|(v, _)| v).collect(),
            cumulative,
            total: acc,
        }
    }

    pub fn unweighted(values: Vec<f64>) -> Self {
        Self::weighted(values.into_iter().map(|v| (v, 1.0)).collect())
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    /// Share of weight on values strictly below `v`; zero for an empty CDF.
    pub fn eval(&self, v: f64) -> f64 {
        if self.total <= 0.0 {
            return 0.0;
        }
        let k = self.values.partition_point(|x| *x < v);
        if k == 0 {
            0.0
        } else {
            (self.cumulative[k - 1] / self.total).min(1.0)
        }
    }
}

/// CDF of the gaps, the first measured from the window start.
pub fn empirical_gap_cdf(events: &EventSequence) -> StepCdf {
    StepCdf::unweighted(events.gaps())
}

/// `points` quantile-spaced values of the observed gaps.
pub fn default_v_grid(events: &EventSequence, points: usize) -> Vec<f64> {
    let mut gaps = events.gaps();
    if gaps.is_empty() || points == 0 {
        return Vec::new();
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    let mut grid: Vec<f64> = (0..points)
        .map(|k| {
            let pos = if points == 1 { 0.0 } else { k as f64 * (n - 1) as f64 / (points - 1) as f64 };
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            gaps[lo] + (pos - lo as f64) * (gaps[hi] - gaps[lo])
        })
        .collect();
    grid.dedup();
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub grid: Vec<f64>,
    pub observed: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// Replicates without events, counted as `F ≡ 0`.
    pub empty_replicates: usize,
}

impl Envelope {
    /// Share of grid points where the observed CDF lies inside `[L, U]`.
    pub fn coverage(&self) -> f64 {
        if self.grid.is_empty() {
            return 1.0;
        }
        let inside = (0..self.grid.len())
            .filter(|&k| self.lower[k] <= self.observed[k] && self.observed[k] <= self.upper[k])
            .count();
        inside as f64 / self.grid.len() as f64
    }
}

/// Pointwise mean, max and min of gap CDFs over `w` trajectories simulated
/// at `params` on a window as long as the observed one.
pub fn envelope(
    events: &EventSequence,
    params: &ModelParams,
    w: usize,
    grid: &[f64],
    seed: u64,
    truncation: Truncation,
) -> Result<Envelope> {
    if w == 0 {
        return Err(Error::InvalidParameter {
            name: "w",
            reason: "at least one replicate is required".into(),
        });
    }
    let horizon = events.window_end() - events.window_start();
    let replicates: Vec<Vec<f64>> = (0..w as u64)
        .into_par_iter()
        .map(|k| {
            let sim = simulate_stream(params, horizon, seed, k, truncation)?;
            let cdf = empirical_gap_cdf(&sim.events);
            Ok(grid.iter().map(|&v| cdf.eval(v)).collect())
        })
        .collect::<Result<_>>()?;
    let empty_replicates = replicates.iter().filter(|r| r.iter().all(|v| *v == 0.0)).count();
    let observed_cdf = empirical_gap_cdf(events);
    let g = grid.len();
    let mut mean = vec![0.0; g];
    let mut upper = vec![f64::NEG_INFINITY; g];
    let mut lower = vec![f64::INFINITY; g];
    for r in &replicates {
        for k in 0..g {
            mean[k] += r[k] / w as f64;
            upper[k] = upper[k].max(r[k]);
            lower[k] = lower[k].min(r[k]);
        }
    }
    // Keep L ≤ F̄ ≤ U exact under rounding of the mean.
    for k in 0..g {
        mean[k] = mean[k].clamp(lower[k], upper[k]);
    }
    Ok(Envelope {
        grid: grid.to_vec(),
        observed: grid.iter().map(|&v| observed_cdf.eval(v)).collect(),
        mean,
        upper,
        lower,
        empty_replicates,
    })
}

/// Weighted empirical CDF against a model CDF, with a pointwise 95% band.
///
/// The band treats gaps as independent, so the weighted indicator mean has
/// variance `F(1−F)/n_eff` with `n_eff = (Σw)² / Σw²`; it is a Wilson score
/// interval on that effective size, which stays informative near 0 and 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfCheck {
    pub grid: Vec<f64>,
    pub empirical: Vec<f64>,
    pub model: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

fn wilson(p: f64, n: f64) -> (f64, f64) {
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

impl CdfCheck {
    fn build(data: Vec<(f64, f64)>, grid: &[f64], model: impl Fn(f64) -> f64) -> Self {
        let w_sum: f64 = data.iter().map(|(_, w)| w).sum();
        let w2: f64 = data.iter().map(|(_, w)| w * w).sum();
        let n_eff = w_sum * w_sum / w2;
        let cdf = StepCdf::weighted(data);
        let empirical: Vec<f64> = grid.iter().map(|&v| cdf.eval(v)).collect();
        let (ci_lo, ci_hi) = empirical.iter().map(|&f| wilson(f, n_eff)).unzip();
        CdfCheck {
            grid: grid.to_vec(),
            model: grid.iter().map(|&v| model(v)).collect(),
            ci_lo,
            ci_hi,
            empirical,
        }
    }

    /// Share of grid points where the model CDF leaves the band.
    pub fn outside_fraction(&self) -> f64 {
        if self.grid.is_empty() {
            return 0.0;
        }
        let out = (0..self.grid.len())
            .filter(|&k| self.model[k] < self.ci_lo[k] || self.model[k] > self.ci_hi[k])
            .count();
        out as f64 / self.grid.len() as f64
    }

    pub fn sup_distance(&self) -> f64 {
        self.empirical
            .iter()
            .zip(&self.model)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Offspring-gap CDF of `mark`, weighted by the offspring posteriors.
pub fn offspring_cdf_check(stats: &WindowStats, params: &ModelParams, mark: Mark, grid: &[f64]) -> Result<CdfCheck> {
    let data: Vec<(f64, f64)> = stats
        .events
        .iter()
        .filter(|e| e.mark == mark)
        .map(|e| (e.gap(), e.offspring_prob()))
        .collect();
    if !(data.iter().map(|(_, w)| w).sum::<f64>() > 0.0) {
        return Err(Error::Degenerate(format!("no offspring weight for mark {}", mark.index())));
    }
    let model = params.offspring(mark).clone();
    Ok(CdfCheck::build(data, grid, |v| model.cdf(v)))
}

/// Integrated fitted hazard over every gap with its parent posterior.
///
/// A window-opening event is measured from the event before it in `stats`
/// rather than from the window boundary, so `stats` must hold consecutive
/// windows in time order (as [`crate::clem::e_step`] aggregates them).
/// Dropping openers instead would bias the gaps short: boundaries fall
/// preferentially inside long gaps.
pub fn rescaled_parent_gaps(stats: &WindowStats, params: &ModelParams) -> Vec<(f64, f64)> {
    let mut before: Option<f64> = None;
    stats
        .events
        .iter()
        .map(|e| {
            let from = match before {
                Some(t) if e.opens_window && t < e.time => t,
                _ => e.previous,
            };
            before = Some(e.time);
            (params.hazard.integral(from, e.time), e.parent_prob)
        })
        .collect()
}

/// Parent-weighted CDF of rescaled gaps against `1 − e^{−v}`.
pub fn rescaled_parent_check(stats: &WindowStats, params: &ModelParams, grid: &[f64]) -> Result<CdfCheck> {
    let data = rescaled_parent_gaps(stats, params);
    if !(data.iter().map(|(_, w)| w).sum::<f64>() > 0.0) {
        return Err(Error::Degenerate("no parent weight".into()));
    }
    Ok(CdfCheck::build(data, grid, |v| if v > 0.0 { -(-v).exp_m1() } else { 0.0 }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF, with Stephens' small-sample
/// correction of the asymptotic p-value.
pub fn ks_test(values: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsTest> {
    if values.is_empty() {
        return Err(Error::InvalidParameter {
            name: "values",
            reason: "empty sample".into(),
        });
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok(KsTest {
        statistic: d,
        p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
    })
}

pub fn ks_exponential(values: &[f64]) -> Result<KsTest> {
    ks_test(values, |v| if v > 0.0 { -(-v).exp_m1() } else { 0.0 })
}
