//! Maximization of the expected complete-data composite log-likelihood.
//!
//! The objective separates into α, γ, μ₁, μ₀ (closed forms), one offspring
//! block per mark (closed form for exponential, profile Newton for Weibull),
//! and the hazard coefficients (Newton on a concave objective).

use crate::error::{Error, Result};
use crate::hazard::HazardObjective;
use crate::model::{Mark, ModelParams, OffspringGap};
use crate::window::WindowStats;

pub const ALPHA_FLOOR: f64 = 1e-8;
pub const RATE_MIN: f64 = 1e-10;
pub const RATE_MAX: f64 = 1e10;
const EMPTY: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct MStep {
    pub params: ModelParams,
    /// Parameters kept at their previous value because their expected
    /// denominator vanished.
    pub held: Vec<&'static str>,
    pub newton_steps: usize,
}

#[inline]
pub fn clamp_rate(v: f64) -> f64 {
    v.clamp(RATE_MIN, RATE_MAX)
}

pub fn clamp_alpha(v: f64) -> f64 {
    v.clamp(ALPHA_FLOOR, 1.0 - ALPHA_FLOOR)
}

/// Hazard part of the expected complete-data log-likelihood.
pub fn hazard_objective(stats: &WindowStats) -> HazardObjective {
    let mut obj = HazardObjective::new();
    for e in &stats.events {
        obj.add_point(e.time, e.parent_prob);
        obj.add_interval(e.previous, e.time, e.parent_prob);
    }
    for &(a, b) in &stats.tails {
        obj.add_interval(a, b, 1.0);
    }
    obj
}

/// Offspring gaps of `mark` with their posterior offspring weights.
pub fn weighted_offspring_gaps(stats: &WindowStats, mark: Mark) -> Vec<(f64, f64)> {
    stats
        .events
        .iter()
        .filter(|e| e.mark == mark && e.offspring_prob() > 0.0)
        .map(|e| (e.gap(), e.offspring_prob()))
        .collect()
}

/// Weighted Weibull log-likelihood `Σ w log f(d; shape, scale)`.
pub fn weibull_loglik(data: &[(f64, f64)], shape: f64, scale: f64) -> f64 {
    let g = OffspringGap::Weibull { shape, scale };
    data.iter().map(|(d, w)| w * g.log_density(*d)).sum()
}

/// Weighted Weibull MLE. The profile score in the shape is strictly
/// decreasing, so a bracketed Newton iteration on it converges globally.
pub fn weibull_mle(data: &[(f64, f64)], start_shape: f64) -> Option<(f64, f64)> {
    let w_sum: f64 = data.iter().map(|(_, w)| w).sum();
    if w_sum <= EMPTY {
        return None;
    }
    let logs: Vec<(f64, f64)> = data.iter().map(|(d, w)| (d.ln(), *w)).collect();
    let log_max = logs.iter().map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    let mean_log = logs.iter().map(|(l, w)| l * w).sum::<f64>() / w_sum;
    // Tilted moments of log d under weights w·d^k.
    let moments = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (l, w) in &logs {
            let e = w * (k * (l - log_max)).exp();
            s0 += e;
            s1 += e * l;
            s2 += e * l * l;
        }
        let m1 = s1 / s0;
        (s0, m1, s2 / s0 - m1 * m1)
    };
    let score = |k: f64| {
        let (_, m1, var) = moments(k);
        (1.0 / k - m1 + mean_log, -1.0 / (k * k) - var)
    };
    let (mut lo, mut hi) = (1e-3, 1e3);
    if score(hi).0 > 0.0 {
        // Degenerate data (all gaps equal): the likelihood grows without bound.
        return None;
    }
    let mut k = start_shape.clamp(lo, hi);
    for _ in 0..200 {
        let (g, dg) = score(k);
        if g.abs() < 1e-13 {
            break;
        }
        if g > 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let newton = k - g / dg;
        k = if newton > lo && newton < hi && dg < 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-14 * k {
            break;
        }
    }
    let (s0, _, _) = moments(k);
    let log_scale = ((s0 / w_sum).ln() + k * log_max) / k;
    Some((k, log_scale.exp()))
}

fn update_offspring(prev: &OffspringGap, stats: &WindowStats, mark: Mark, held: &mut Vec<&'static str>) -> OffspringGap {
    let z = mark.index();
    let name = if mark == Mark::Original { "rho1" } else { "rho0" };
    match prev {
        OffspringGap::Exponential { .. } => {
            let count = stats.expected_offspring[z];
            let total = stats.expected_offspring_gap[z];
            if count <= EMPTY || total <= 0.0 {
                held.push(name);
                return prev.clone();
            }
            OffspringGap::Exponential {
                rate: clamp_rate(count / total),
            }
        }
        OffspringGap::Weibull { shape, scale } => {
            let data = weighted_offspring_gaps(stats, mark);
            match weibull_mle(&data, *shape) {
                Some((k, s)) => {
                    let (k, s) = (clamp_rate(k), clamp_rate(s));
                    if weibull_loglik(&data, k, s) >= weibull_loglik(&data, *shape, *scale) {
                        OffspringGap::Weibull { shape: k, scale: s }
                    } else {
                        prev.clone()
                    }
                }
                None => {
                    held.push(name);
                    prev.clone()
                }
            }
        }
    }
}

/// One M-step from aggregated posterior statistics.
pub fn m_step(stats: &WindowStats, prev: &ModelParams, newton_iterations: usize) -> Result<MStep> {
    let episodes = stats.expected_episodes;
    if episodes <= EMPTY {
        return Err(Error::NoEvents);
    }
    let mut held = Vec::new();
    let alpha = clamp_alpha(stats.expected_original_parents / episodes);
    let gamma = clamp_rate(stats.expected_switches / episodes);
    let mut mu = [prev.mu0, prev.mu1];
    for (z, name) in [(0usize, "mu0"), (1, "mu1")] {
        let segs = stats.expected_segments[z];
        if segs > EMPTY {
            mu[z] = clamp_rate(stats.expected_segment_excess[z] / segs);
        } else {
            held.push(name);
        }
    }
    let rho1 = update_offspring(&prev.rho1, stats, Mark::Original, &mut held);
    let rho0 = update_offspring(&prev.rho0, stats, Mark::Repost, &mut held);
    let (hazard, newton_steps) = hazard_objective(stats).maximize(&prev.hazard, newton_iterations);
    Ok(MStep {
        params: ModelParams {
            alpha,
            gamma,
            mu1: mu[1],
            mu0: mu[0],
            rho1,
            rho0,
            hazard,
        },
        held,
        newton_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weibull_mle_recovers_exponential_case() {
        // Shape-one data drawn deterministically from the exponential quantile function.
        let n = 2000;
        let data: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                (-(1.0 - u).ln() / 5.0, 1.0)
            })
            .collect();
        let (k, s) = weibull_mle(&data, 2.0).unwrap();
        assert!((k - 1.0).abs() < 0.02, "shape {k}");
        assert!((s - 0.2).abs() < 0.005, "scale {s}");
    }

    #[test]
    fn weibull_mle_is_stationary() {
        let data: Vec<(f64, f64)> = (1..40).map(|i| ((i as f64 * 0.37).sin().abs() + 0.05, 0.5 + (i % 3) as f64)).collect();
        let (k, s) = weibull_mle(&data, 1.0).unwrap();
        let best = weibull_loglik(&data, k, s);
        for (dk, ds) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
            assert!(weibull_loglik(&data, k + dk, s + ds) <= best + 1e-12);
        }
    }

    #[test]
    fn weibull_mle_degenerate() {
        assert!(weibull_mle(&[], 1.0).is_none());
        assert!(weibull_mle(&[(0.3, 1.0), (0.3, 2.0)], 1.0).is_none());
    }
}
