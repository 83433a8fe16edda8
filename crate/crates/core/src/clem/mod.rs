//! Composite-likelihood EM.
//!
//! Each iteration computes per-window label posteriors at the current
//! parameters (E-step) and maximizes the expected complete-data composite
//! log-likelihood (M-step). Every iteration is checked for ascent; a drop
//! beyond [`ASCENT_SLACK`] aborts the run.

pub mod direct;
pub mod init;
pub mod mstep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{derived_metrics, DerivedMetrics};
use crate::error::{Error, Result};
use crate::hazard::{HazardFamily, DEFAULT_KNOTS};
use crate::model::{EventSequence, ModelParams, OffspringFamily};
use crate::simulate::rng_for;
use crate::uncertainty::VarianceEstimate;
use crate::window::{partition, posterior_stats, WindowPartition, WindowStats};

pub use mstep::{m_step, MStep};

/// Largest tolerated decrease of the composite log-likelihood per iteration.
pub const ASCENT_SLACK: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Sub-window length `s` in days.
    pub sub_window_length: f64,
    pub max_iterations: usize,
    /// Absolute log-likelihood improvement below which the run may stop.
    pub loglik_tolerance: f64,
    /// Largest relative parameter change allowed at convergence.
    pub param_tolerance: f64,
    pub starts: usize,
    pub seed: u64,
    pub offspring: OffspringFamily,
    pub hazard: HazardFamily,
    /// Newton iterations for the hazard coefficients per M-step.
    pub newton_iterations: usize,
    /// Replaces the moment seed as the first start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<ModelParams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            sub_window_length: 7.0,
            max_iterations: 500,
            loglik_tolerance: 1e-8,
            param_tolerance: 1e-6,
            starts: 5,
            seed: 0,
            offspring: OffspringFamily::Exponential,
            hazard: HazardFamily::bspline_with_knots(DEFAULT_KNOTS),
            newton_iterations: 50,
            initial: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if !(self.loglik_tolerance > 0.0) {
            return bad("loglik_tolerance", "must be positive");
        }
        if !(self.param_tolerance > 0.0) {
            return bad("param_tolerance", "must be positive");
        }
        if self.starts == 0 {
            return bad("starts", "at least one start is required");
        }
        if !(self.sub_window_length > 0.0) {
            return bad("sub_window_length", "must be positive");
        }
        self.hazard.validate()?;
        if let Some(init) = &self.initial {
            init.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    /// Composite log-likelihood before the first and after every iteration.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Index of the winning start.
    pub start: usize,
    /// Final log-likelihood of every start (`None` for a failed start).
    pub start_logliks: Vec<Option<f64>>,
    /// Parameters held fixed in the last M-step for lack of information.
    pub held: Vec<String>,
    pub derived: DerivedMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceEstimate>,
    /// Per-window posterior statistics at the estimate.
    #[serde(skip)]
    pub windows: Vec<WindowStats>,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds the starting value")
    }
}

/// Posterior statistics for every window and their sum.
pub fn e_step(partition: &WindowPartition, params: &ModelParams) -> (Vec<WindowStats>, WindowStats) {
    let windows: Vec<WindowStats> = partition
        .windows
        .par_iter()
        .map(|w| posterior_stats(w, params))
        .collect();
    let total = WindowStats::aggregate(&windows);
    (windows, total)
}

/// Composite log-likelihood `Σ_m log f(t_m, x_m | θ)`.
pub fn composite_loglik(partition: &WindowPartition, params: &ModelParams) -> f64 {
    let parts: Vec<f64> = partition
        .windows
        .par_iter()
        .map(|w| crate::window::dp_loglik(w, params))
        .collect();
    neumaier(&parts)
}

pub(crate) fn neumaier(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Largest relative coordinate change, measured against `max(|old|, 1e-3)`.
pub fn max_relative_change(old: &ModelParams, new: &ModelParams) -> f64 {
    old.to_vec()
        .iter()
        .zip(new.to_vec())
        .map(|(a, b)| (b - a).abs() / a.abs().max(1e-3))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct EmRun {
    pub params: ModelParams,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub held: Vec<&'static str>,
    pub windows: Vec<WindowStats>,
}

/// Run CLEM from one starting point.
pub fn run_em(partition: &WindowPartition, start: ModelParams, config: &FitConfig) -> Result<EmRun> {
    start.validate()?;
    let mut params = start;
    let (mut windows, mut total) = e_step(partition, &params);
    if total.expected_episodes <= 0.0 {
        return Err(Error::NoEvents);
    }
    let mut trace = vec![total.log_likelihood];
    let mut converged = false;
    let mut held = Vec::new();
    let mut iterations = 0;
    for iteration in 1..=config.max_iterations {
        let step = m_step(&total, &params, config.newton_iterations)?;
        let (next_windows, next_total) = e_step(partition, &step.params);
        let previous = total.log_likelihood;
        let current = next_total.log_likelihood;
        if !(current >= previous - ASCENT_SLACK) {
            return Err(Error::AscentViolation {
                iteration,
                previous,
                current,
            });
        }
        let change = max_relative_change(&params, &step.params);
        trace.push(current);
        params = step.params;
        held = step.held;
        windows = next_windows;
        total = next_total;
        iterations = iteration;
        if (current - previous).abs() < config.loglik_tolerance && change < config.param_tolerance {
            converged = true;
            break;
        }
    }
    Ok(EmRun {
        params,
        trace,
        converged,
        iterations,
        held,
        windows,
    })
}

/// Starting points: the moment seed (or the configured initial value) and
/// `starts − 1` random perturbations of it.
pub fn starting_points(partition: &WindowPartition, config: &FitConfig) -> Vec<ModelParams> {
    let seed = config
        .initial
        .clone()
        .unwrap_or_else(|| init::moment_seed(partition, config.offspring, &config.hazard));
    let mut rng = rng_for(config.seed, u64::MAX);
    let mut starts = vec![seed.clone()];
    for _ in 1..config.starts {
        starts.push(init::perturb(&seed, &mut rng));
    }
    starts
}

/// Fit on a pre-partitioned data set.
pub fn fit_partition(partition: &WindowPartition, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if partition.event_count() == 0 {
        return Err(Error::NoEvents);
    }
    let starts = starting_points(partition, config);
    let runs: Vec<Result<EmRun>> = starts
        .into_par_iter()
        .map(|s| run_em(partition, s, config))
        .collect();
    let start_logliks: Vec<Option<f64>> = runs
        .iter()
        .map(|r| r.as_ref().ok().map(|run| *run.trace.last().unwrap()))
        .collect();
    let best = start_logliks
        .iter()
        .enumerate()
        .filter_map(|(k, ll)| ll.map(|v| (k, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k);
    let Some(best) = best else {
        let total = runs.len();
        let last = runs.into_iter().rev().find_map(|r| r.err()).expect("all runs failed");
        return Err(Error::AllStartsFailed {
            starts: total,
            last: Box::new(last),
        });
    };
    let run = runs.into_iter().nth(best).unwrap().unwrap();
    Ok(FitResult {
        derived: derived_metrics(&run.params),
        params: run.params,
        loglik_trace: run.trace,
        converged: run.converged,
        iterations: run.iterations,
        start: best,
        start_logliks,
        held: run.held.iter().map(|s| s.to_string()).collect(),
        variance: None,
        windows: run.windows,
    })
}

/// Partition `events` into sub-windows and fit.
pub fn fit(events: &EventSequence, config: &FitConfig) -> Result<FitResult> {
    if events.is_empty() {
        return Err(Error::NoEvents);
    }
    let partition = partition(events, config.sub_window_length)?;
    fit_partition(&partition, config)
}
