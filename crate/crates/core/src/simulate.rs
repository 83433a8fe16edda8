//! Trajectory generation: thinning for parent waiting times, then episode
//! composition and offspring gaps.
//!
//! Randomness comes from ChaCha8 seeded with a `u64`; replicate `k` of a
//! batch uses stream `k` of the same seed, so trajectories are reproducible
//! bit-for-bit and independent across replicates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::HazardSpec;
use crate::model::{EventSequence, LabelAssignment, Mark, ModelParams};

/// Grid resolution used to bound the hazard from above.
pub const MAJORANT_GRID: usize = 10_000;
pub const MAJORANT_SAFETY: f64 = 1.0001;
const STRICT_MAX_TRIES: usize = 10_000;

/// What to do with an episode that runs past the end of the window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// Keep the events up to `T` and discard the rest.
    #[default]
    Drop,
    /// Redraw the final episode until it fits inside `[0, T]`.
    Strict,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub events: EventSequence,
    pub labels: LabelAssignment,
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Upper bound on the hazard over one period.
pub fn majorant(hazard: &HazardSpec) -> Result<f64> {
    let m = hazard.grid_max(MAJORANT_GRID) * MAJORANT_SAFETY;
    if m.is_finite() && m > 0.0 && m < 1e300 {
        Ok(m)
    } else {
        Err(Error::MajorantOverflow)
    }
}

/// Next parent time after `from` by thinning a rate-`bound` Poisson stream,
/// or `None` once candidates pass `horizon`.
pub fn next_parent<R: Rng + ?Sized>(
    hazard: &HazardSpec,
    bound: f64,
    from: f64,
    horizon: f64,
    rng: &mut R,
) -> Option<f64> {
    let mut t = from;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / bound;
        if t > horizon {
            return None;
        }
        let u: f64 = rng.random();
        if u * bound <= hazard.evaluate(t) {
            return Some(t);
        }
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// Marks of one episode: first segment type, `1 + Pois(γ)` alternating
/// segments of sizes `1 + Pois(μ_z)`.
pub fn sample_composition<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Vec<Mark> {
    let first = if rng.random::<f64>() < params.alpha {
        Mark::Original
    } else {
        Mark::Repost
    };
    let segments = 1 + poisson(params.gamma, rng);
    let mut marks = Vec::new();
    let mut mark = first;
    for _ in 0..segments {
        let size = 1 + poisson(params.mu(mark), rng);
        marks.extend(std::iter::repeat_n(mark, size));
        mark = mark.flip();
    }
    marks
}

/// One episode anchored at `parent`: event times and marks.
pub fn sample_episode<R: Rng + ?Sized>(params: &ModelParams, parent: f64, rng: &mut R) -> Vec<(f64, Mark)> {
    let marks = sample_composition(params, rng);
    let mut t = parent;
    let mut out = Vec::with_capacity(marks.len());
    for (k, m) in marks.into_iter().enumerate() {
        if k > 0 {
            t += params.offspring(m).sample(rng);
        }
        out.push((t, m));
    }
    out
}

/// Simulate on `[0, horizon]`.
pub fn simulate(params: &ModelParams, horizon: f64, seed: u64, truncation: Truncation) -> Result<Simulation> {
    simulate_stream(params, horizon, seed, 0, truncation)
}

pub fn simulate_stream(
    params: &ModelParams,
    horizon: f64,
    seed: u64,
    stream: u64,
    truncation: Truncation,
) -> Result<Simulation> {
    let mut rng = rng_for(seed, stream);
    simulate_with(params, horizon, truncation, &mut rng)
}

pub fn simulate_with<R: Rng + ?Sized>(
    params: &ModelParams,
    horizon: f64,
    truncation: Truncation,
    rng: &mut R,
) -> Result<Simulation> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: format!("observation window must be positive, got {horizon}"),
        });
    }
    params.validate()?;
    let bound = majorant(&params.hazard)?;
    let mut times = Vec::new();
    let mut marks = Vec::new();
    let mut labels = Vec::new();
    let mut now = 0.0;
    while let Some(parent) = next_parent(&params.hazard, bound, now, horizon, rng) {
        let mut episode = sample_episode(params, parent, rng);
        if truncation == Truncation::Strict {
            let mut tries = 0;
            while episode.last().map(|e| e.0 > horizon).unwrap_or(false) && tries < STRICT_MAX_TRIES {
                episode = sample_episode(params, parent, rng);
                tries += 1;
            }
        }
        let overflow = episode.last().map(|e| e.0 > horizon).unwrap_or(false);
        for (k, (t, m)) in episode.into_iter().enumerate() {
            if t > horizon {
                break;
            }
            // Offspring gaps can underflow to zero; nudge to keep times strictly increasing.
            let t = match times.last() {
                Some(&prev) if t <= prev => f64::from_bits(prev.to_bits() + 1),
                _ => t,
            };
            if t > horizon {
                break;
            }
            times.push(t);
            marks.push(m);
            labels.push(k == 0);
        }
        if overflow {
            break;
        }
        now = *times.last().expect("parent is inside the window");
    }
    let events = EventSequence::new(0.0, horizon, times, marks)?;
    Ok(Simulation {
        events,
        labels: LabelAssignment { labels },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard::{HazardFamily, HazardSpec};
    use crate::model::{decompose, OffspringGap};

    fn table1() -> ModelParams {
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

    #[test]
    fn deterministic_given_seed() {
        let a = simulate(&table1(), 50.0, 7, Truncation::Drop).unwrap();
        let b = simulate(&table1(), 50.0, 7, Truncation::Drop).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.labels, b.labels);
        let c = simulate(&table1(), 50.0, 8, Truncation::Drop).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn parents_only_when_no_offspring() {
        let mut p = table1();
        p.gamma = 0.0;
        p.mu1 = 0.0;
        p.mu0 = 0.0;
        let sim = simulate(&p, 200.0, 3, Truncation::Drop).unwrap();
        assert!(sim.labels.labels.iter().all(|l| *l));
    }

    #[test]
    fn constant_hazard_gap_mean() {
        let mut p = table1();
        p.gamma = 0.0;
        p.mu1 = 0.0;
        p.mu0 = 0.0;
        p.hazard = HazardSpec::constant(HazardFamily::Sinusoidal { harmonics: 0 }, 4.0);
        let sim = simulate(&p, 25_000.0, 11, Truncation::Drop).unwrap();
        let gaps = sim.events.gaps();
        let n = gaps.len() as f64;
        assert!(n > 90_000.0);
        let mean = gaps.iter().sum::<f64>() / n;
        // Exponential: SD = mean; SE = 0.25 / √n.
        assert!((mean - 0.25).abs() < 3.0 * 0.25 / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn strict_mode_keeps_last_episode_whole() {
        let p = table1();
        for seed in 0..20 {
            let sim = simulate(&p, 10.0, seed, Truncation::Strict).unwrap();
            let drop = simulate(&p, 10.0, seed, Truncation::Drop).unwrap();
            assert!(sim.events.last_time() <= 10.0);
            assert!(drop.events.last_time() <= 10.0);
        }
    }

    #[test]
    fn labels_decompose() {
        let sim = simulate(&table1(), 100.0, 5, Truncation::Drop).unwrap();
        let d = decompose(&sim.events, &sim.labels).unwrap();
        assert_eq!(d.event_count(), sim.events.len());
        for ep in &d.episodes {
            for pair in ep.segments.windows(2) {
                assert_ne!(pair[0].mark, pair[1].mark);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        assert!(simulate(&table1(), 0.0, 1, Truncation::Drop).is_err());
        assert!(simulate(&table1(), -3.0, 1, Truncation::Drop).is_err());
    }

    #[test]
    fn majorant_overflow() {
        let mut p = table1();
        p.hazard = HazardSpec::sinusoidal(vec![800.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            simulate(&p, 1.0, 1, Truncation::Drop),
            Err(Error::MajorantOverflow)
        ));
    }
}
