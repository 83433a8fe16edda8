//! Standard errors for the composite-likelihood estimator.
//!
//! Window scores are obtained through Fisher's identity: the gradient of a
//! window's marginal log-likelihood equals the posterior expectation of the
//! complete-data score, which is linear in the statistics already produced
//! by the E-step.
//!
//! Sandwich convention: with `H = Σ_m ∂U_m/∂θ` and `J = Σ_m U_m U_mᵀ`,
//! `Î₀ = H / (sM)`, `Ĵ = J / (s²M)` and `Var(θ̂) = Î₀⁻¹ Ĵ Î₀⁻ᵀ / M`, which
//! reduces to `H⁻¹ J H⁻ᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clem::mstep::hazard_objective;
use crate::clem::{e_step, fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::model::{Mark, ModelParams, OffspringGap};
use crate::simulate::{rng_for, simulate_stream, Truncation};
use crate::window::{posterior_stats, WindowPartition, WindowStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Sandwich,
    SimulationCov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub method: VarianceMethod,
    pub names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    /// Replicates dropped by the simulation method.
    #[serde(default)]
    pub failed: usize,
}

impl VarianceEstimate {
    fn from_matrix(method: VarianceMethod, names: Vec<String>, cov: &DMatrix<f64>) -> Self {
        let p = cov.nrows();
        let sym = (cov + cov.transpose()) * 0.5;
        let covariance: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| sym[(i, j)]).collect()).collect();
        let se = (0..p).map(|i| sym[(i, i)].max(0.0).sqrt()).collect();
        VarianceEstimate {
            method,
            names,
            covariance,
            se,
            warning: None,
            failed: 0,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let p = self.covariance.len();
        DMatrix::from_fn(p, p, |i, j| self.covariance[i][j])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.se[k])
    }
}

/// Gradient of the marginal log-likelihood of the windows summarized in
/// `stats`, in the coordinates of [`ModelParams::to_vec`].
pub fn score_from_stats(stats: &WindowStats, params: &ModelParams) -> Vec<f64> {
    let mut score = Vec::with_capacity(params.dim());
    let parents1 = stats.expected_original_parents;
    let parents0 = stats.expected_episodes - parents1;
    score.push(parents1 / params.alpha - parents0 / (1.0 - params.alpha));
    score.push(poisson_score(stats.expected_switches, stats.expected_episodes, params.gamma));
    score.push(poisson_score(
        stats.expected_segment_excess[1],
        stats.expected_segments[1],
        params.mu1,
    ));
    score.push(poisson_score(
        stats.expected_segment_excess[0],
        stats.expected_segments[0],
        params.mu0,
    ));
    for mark in [Mark::Original, Mark::Repost] {
        let z = mark.index();
        match *params.offspring(mark) {
            OffspringGap::Exponential { rate } => {
                score.push(stats.expected_offspring[z] / rate - stats.expected_offspring_gap[z]);
            }
            OffspringGap::Weibull { shape, scale } => {
                let (mut ds, mut dc) = (0.0, 0.0);
                for e in stats.events.iter().filter(|e| e.mark == mark) {
                    let w = e.offspring_prob();
                    if w <= 0.0 {
                        continue;
                    }
                    let lz = (e.gap() / scale).ln();
                    let zk = (shape * lz).exp();
                    ds += w * (1.0 / shape + lz - zk * lz);
                    dc += w * (shape / scale) * (zk - 1.0);
                }
                score.push(ds);
                score.push(dc);
            }
        }
    }
    score.extend(hazard_objective(stats).gradient(&params.hazard));
    score
}

/// `k/rate − n`, with the `0/0` case at a zero rate read as zero.
fn poisson_score(excess: f64, count: f64, rate: f64) -> f64 {
    if excess == 0.0 {
        -count
    } else {
        excess / rate - count
    }
}

/// Score `U_m` of one window.
pub fn window_score(window: &crate::model::EventSequence, params: &ModelParams) -> Vec<f64> {
    score_from_stats(&posterior_stats(window, params), params)
}

/// Total composite score `Σ_m U_m`.
pub fn composite_score(partition: &WindowPartition, params: &ModelParams) -> Vec<f64> {
    let (_, total) = e_step(partition, params);
    score_from_stats(&total, params)
}

fn in_domain(params: &ModelParams) -> bool {
    params.validate().is_ok() && params.gamma > 0.0 && params.mu1 > 0.0 && params.mu0 > 0.0
}

/// `Σ_m ∂U_m/∂θ` by central differences of the analytic score, falling back
/// to one-sided differences next to the parameter boundary.
pub fn score_jacobian(partition: &WindowPartition, params: &ModelParams) -> DMatrix<f64> {
    let theta = params.to_vec();
    let p = theta.len();
    let columns: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let h = 1e-6 * (1.0 + theta[j].abs());
            let shifted = |delta: f64| {
                let mut v = theta.clone();
                v[j] += delta;
                params.with_vec(&v)
            };
            let plus = shifted(h);
            let minus = shifted(-h);
            let (hi, lo, width) = match (in_domain(&plus), in_domain(&minus)) {
                (true, true) => (plus, minus, 2.0 * h),
                (true, false) => (plus, params.clone(), h),
                (false, true) => (params.clone(), minus, h),
                (false, false) => return vec![0.0; p],
            };
            let up = composite_score(partition, &hi);
            let down = composite_score(partition, &lo);
            up.iter().zip(&down).map(|(a, b)| (a - b) / width).collect()
        })
        .collect();
    DMatrix::from_fn(p, p, |i, j| columns[j][i])
}

/// Inverse, or the Moore–Penrose pseudo-inverse with a warning when the
/// matrix is numerically singular.
fn robust_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, Option<String>) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax > 0.0 && smin > 1e-12 * smax {
        if let Some(inv) = m.clone().try_inverse() {
            return (inv, None);
        }
    }
    let pinv = svd
        .pseudo_inverse(1e-12 * smax.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()));
    (
        pinv,
        Some(format!(
            "information matrix is numerically singular (condition {:.3e}); pseudo-inverse used",
            smax / smin.max(f64::MIN_POSITIVE)
        )),
    )
}

/// Independence sandwich estimate at the fitted parameters.
pub fn sandwich(fit: &FitResult, partition: &WindowPartition) -> Result<VarianceEstimate> {
    let params = &fit.params;
    params.validate()?;
    let m = partition.len();
    if m == 0 {
        return Err(Error::NoEvents);
    }
    let s = partition.sub_window_length;
    let mf = m as f64;
    let p = params.dim();
    let scores: Vec<Vec<f64>> = partition
        .windows
        .par_iter()
        .map(|w| window_score(w, params))
        .collect();
    let mut outer = DMatrix::zeros(p, p);
    for u in &scores {
        let v = DVector::from_column_slice(u);
        outer += &v * v.transpose();
    }
    let info0 = score_jacobian(partition, params) / (s * mf);
    let meat = outer / (s * s * mf);
    let (inv, warning) = robust_inverse(&info0);
    let cov = &inv * meat * inv.transpose() / mf;
    let mut est = VarianceEstimate::from_matrix(VarianceMethod::Sandwich, params.names(), &cov);
    est.warning = warning;
    Ok(est)
}

/// Sample covariance of refits on trajectories simulated at the estimate.
/// Each entry of `seeds` is a `(seed, stream)` pair for one replicate.
pub fn simulation_cov_with_seeds(
    fit: &FitResult,
    config: &FitConfig,
    horizon: f64,
    seeds: &[(u64, u64)],
) -> Result<VarianceEstimate> {
    if seeds.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "w",
            reason: "at least two replicates are required".into(),
        });
    }
    let mut cfg = config.clone();
    cfg.initial = Some(fit.params.clone());
    let estimates: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|&(seed, stream)| {
            let sim = simulate_stream(&fit.params, horizon, seed, stream, Truncation::Drop).ok()?;
            fit_replicate(&sim.events, &cfg)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = estimates.iter().flatten().collect();
    let failed = estimates.len() - ok.len();
    if failed * 5 > estimates.len() || ok.len() < 2 {
        return Err(Error::TooManyFailures {
            failed,
            total: estimates.len(),
        });
    }
    let p = fit.params.dim();
    let n = ok.len() as f64;
    let mean: Vec<f64> = (0..p).map(|k| ok.iter().map(|v| v[k]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(p, p, |i, j| {
        ok.iter().map(|v| (v[i] - mean[i]) * (v[j] - mean[j])).sum::<f64>() / (n - 1.0)
    });
    let mut est = VarianceEstimate::from_matrix(VarianceMethod::SimulationCov, fit.params.names(), &cov);
    est.failed = failed;
    Ok(est)
}

fn fit_replicate(events: &crate::model::EventSequence, config: &FitConfig) -> Option<Vec<f64>> {
    fit(events, config).ok().map(|f| f.params.to_vec())
}

/// [`simulation_cov_with_seeds`] with replicate `k` on stream `k` of `seed`.
pub fn simulation_cov(
    fit: &FitResult,
    config: &FitConfig,
    horizon: f64,
    w: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    let seeds: Vec<(u64, u64)> = (0..w as u64).map(|k| (seed, k)).collect();
    simulation_cov_with_seeds(fit, config, horizon, &seeds)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub se: f64,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation with a paired-bootstrap standard error.
pub fn bootstrap_corr(x: &[f64], y: &[f64], replicates: usize, seed: u64) -> Result<Correlation> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "x",
            reason: format!("need equal lengths of at least 3, got {} and {}", x.len(), y.len()),
        });
    }
    let r = pearson(x, y).ok_or_else(|| Error::Degenerate("zero variance in x or y".into()))?;
    let n = x.len();
    let mut rng = rng_for(seed, 0);
    let mut rs = Vec::with_capacity(replicates);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..replicates {
        for k in 0..n {
            let i = rng.random_range(0..n);
            bx[k] = x[i];
            by[k] = y[i];
        }
        if let Some(v) = pearson(&bx, &by) {
            rs.push(v);
        }
    }
    let se = if rs.len() < 2 {
        0.0
    } else {
        let m = rs.iter().sum::<f64>() / rs.len() as f64;
        (rs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (rs.len() - 1) as f64).sqrt()
    };
    Ok(Correlation { r, se })
}
