use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use episodic::clem::direct::direct_fit;
use episodic::clem::{fit_partition, starting_points};
use episodic::partition;
use episodic::simulate::simulate_stream;
use serde::Serialize;

use crate::config::{load_toml, BenchmarkConfig};
use crate::error::{CliError, Result};
use crate::io::write_json;

/// Slack for the direct optimizer beating CLEM before it counts as a violation.
const CROSS_CHECK_SLACK: f64 = 1e-6;

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// TOML file with `T`, `replicates`, `seed`, `[params]`, `[fit]` and `[direct]`.
    pub config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct MethodRun {
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct ReplicateReport {
    pub replicate: usize,
    pub events: usize,
    pub clem: Option<MethodRun>,
    pub direct: Option<MethodRun>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub replicates: usize,
    pub clem_converged: usize,
    pub clem_mean_seconds: f64,
    pub direct_converged: usize,
    pub direct_mean_seconds: Option<f64>,
    /// Mean direct time over mean CLEM time.
    pub time_ratio: Option<f64>,
    /// Converged direct runs ending above the CLEM log-likelihood.
    pub cross_check_violations: usize,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub config: BenchmarkConfig,
    pub replicates: Vec<ReplicateReport>,
    pub summary: Summary,
}

fn replicate(config: &BenchmarkConfig, k: usize) -> Result<ReplicateReport> {
    let sim = simulate_stream(&config.params, config.horizon, config.seed, k as u64, config.truncation)?;
    let fit_config = config.fit.fit_config(config.seed.wrapping_add(k as u64))?;
    let parts = partition(&sim.events, fit_config.sub_window_length)?;
    let clock = Instant::now();
    let fit = fit_partition(&parts, &fit_config)?;
    let clem = MethodRun {
        loglik: fit.loglik(),
        converged: fit.converged,
        iterations: fit.iterations,
        seconds: clock.elapsed().as_secs_f64(),
    };
    let direct = if config.direct.enabled {
        let start = starting_points(&parts, &fit_config).swap_remove(0);
        let clock = Instant::now();
        let d = direct_fit(&parts, &start, config.direct.max_iterations, config.direct.tolerance)?;
        Some(MethodRun {
            loglik: d.loglik,
            converged: d.converged,
            iterations: d.iterations,
            seconds: clock.elapsed().as_secs_f64(),
        })
    } else {
        None
    };
    Ok(ReplicateReport {
        replicate: k,
        events: sim.events.len(),
        clem: Some(clem),
        direct,
        error: None,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn run(args: &BenchmarkArgs) -> Result<()> {
    let mut config: BenchmarkConfig = load_toml(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config
        .params
        .validate()
        .map_err(|e| CliError::data(format!("{}: [params]: {e}", args.config.display())))?;
    if !(config.horizon.is_finite() && config.horizon > 0.0) {
        return Err(CliError::data(format!("{}: T must be positive", args.config.display())));
    }
    if config.replicates == 0 {
        return Err(CliError::data(format!("{}: replicates must be at least 1", args.config.display())));
    }
    config.fit.fit_config(config.seed)?;

    let replicates: Vec<ReplicateReport> = (0..config.replicates)
        .map(|k| {
            replicate(&config, k).unwrap_or_else(|e| ReplicateReport {
                replicate: k,
                events: 0,
                clem: None,
                direct: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let clem_mean = mean(replicates.iter().filter_map(|r| r.clem.as_ref()).map(|c| c.seconds)).unwrap_or(0.0);
    let direct_mean = mean(replicates.iter().filter_map(|r| r.direct.as_ref()).map(|d| d.seconds));
    let summary = Summary {
        replicates: replicates.len(),
        clem_converged: replicates.iter().filter(|r| r.clem.as_ref().is_some_and(|c| c.converged)).count(),
        clem_mean_seconds: clem_mean,
        direct_converged: replicates.iter().filter(|r| r.direct.as_ref().is_some_and(|d| d.converged)).count(),
        direct_mean_seconds: direct_mean,
        time_ratio: direct_mean.filter(|_| clem_mean > 0.0).map(|d| d / clem_mean),
        cross_check_violations: replicates
            .iter()
            .filter(|r| match (&r.clem, &r.direct) {
                (Some(c), Some(d)) => d.converged && d.loglik > c.loglik + CROSS_CHECK_SLACK,
                _ => false,
            })
            .count(),
    };
    let report = Report {
        config,
        replicates,
        summary,
    };
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?),
    }
    Ok(())
}
