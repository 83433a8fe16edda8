use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use episodic::analytics::batch_fit;
use episodic::clem::fit_partition;
use episodic::{partition, sandwich, DerivedMetrics, EventSequence, FitConfig, FitResult, ModelParams};
use serde::{Deserialize, Serialize};

use crate::config::FitOptions;
use crate::error::{CliError, Result};
use crate::io::{csv_bytes, read_events, write_atomic, write_json};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Events CSV with header `time,kind`.
    pub events: PathBuf,
    /// Window length in days; defaults to the last event time rounded up.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub options: FitOptions,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the sandwich standard errors.
    #[arg(long)]
    pub no_se: bool,
    /// Also refit every consecutive block of this many days.
    #[arg(long, requires = "period_out")]
    pub period: Option<f64>,
    /// CSV of per-block estimates written with `--period`.
    #[arg(long, requires = "period")]
    pub period_out: Option<PathBuf>,
    /// Fit JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything `episodic fit` writes, and what `episodic gof` reads back.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOutput {
    pub params: ModelParams,
    /// Sandwich standard errors by parameter name; empty with `--no-se`.
    pub se: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_warning: Option<String>,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub held: Vec<String>,
    pub derived: DerivedMetrics,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub events: usize,
    pub config: FitConfig,
    pub seed: u64,
}

/// Fit one event sequence and attach standard errors.
pub fn fit_events(events: &EventSequence, config: &FitConfig, with_se: bool) -> Result<FitOutput> {
    if events.is_empty() {
        return Err(CliError::data("no events to fit"));
    }
    let parts = partition(events, config.sub_window_length)?;
    let fit = fit_partition(&parts, config)?;
    Ok(summarize(&fit, events, config, with_se.then_some(&parts)))
}

fn summarize(
    fit: &FitResult,
    events: &EventSequence,
    config: &FitConfig,
    parts: Option<&episodic::WindowPartition>,
) -> FitOutput {
    let (se, variance_warning) = match parts.map(|p| sandwich(fit, p)) {
        None => (BTreeMap::new(), None),
        Some(Ok(v)) => (v.names.iter().cloned().zip(v.se.iter().copied()).collect(), v.warning),
        Some(Err(e)) => (BTreeMap::new(), Some(e.to_string())),
    };
    FitOutput {
        params: fit.params.clone(),
        se,
        variance_warning,
        loglik: fit.loglik(),
        loglik_trace: fit.loglik_trace.clone(),
        converged: fit.converged,
        iterations: fit.iterations,
        held: fit.held.clone(),
        derived: fit.derived,
        horizon: events.window_end() - events.window_start(),
        events: events.len(),
        config: config.clone(),
        seed: config.seed,
    }
}

pub fn run(args: &FitArgs) -> Result<()> {
    let events = read_events(&args.events)?.into_sequence(args.horizon)?;
    let config = args.options.fit_config(args.seed)?;
    let period = match (args.period, &args.period_out) {
        (Some(days), Some(path)) => Some((period_table(&events, &config, days, !args.no_se)?, path)),
        _ => None,
    };
    let out = fit_events(&events, &config, !args.no_se)?;
    write_json(&args.out, &out)?;
    if let Some((bytes, path)) = period {
        write_atomic(path, &bytes)?;
    }
    if let Some(w) = &out.variance_warning {
        eprintln!("warning: {w}");
    }
    if !out.converged {
        return Err(CliError::Convergence(format!(
            "no convergence after {} iterations; estimates written to {}",
            out.iterations,
            args.out.display()
        )));
    }
    Ok(())
}

/// One row per block: estimates, standard errors and status.
fn period_table(events: &EventSequence, config: &FitConfig, days: f64, with_se: bool) -> Result<Vec<u8>> {
    if !(days.is_finite() && days > 0.0) {
        return Err(CliError::data(format!("--period must be positive, got {days}")));
    }
    let end = events.window_end();
    let count = ((end - events.window_start()) / days).ceil().max(1.0) as usize;
    let blocks: Vec<EventSequence> = (0..count)
        .map(|k| {
            let lo = events.window_start() + k as f64 * days;
            let hi = (lo + days).min(end);
            events.restrict(lo, hi, k + 1 == count)
        })
        .collect();
    let fits = batch_fit(&blocks, config);
    let names = config_names(&fits);
    let mut header: Vec<String> = ["block", "start", "end", "events", "status", "converged", "loglik"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(names.iter().cloned());
    header.extend(names.iter().map(|n| format!("se_{n}")));
    let rows = blocks.iter().zip(&fits).enumerate().map(|(k, (block, fit))| {
        let mut row = vec![
            k.to_string(),
            block.window_start().to_string(),
            block.window_end().to_string(),
            block.len().to_string(),
        ];
        match fit {
            Ok(fit) => {
                let se = if with_se {
                    partition(block, config.sub_window_length)
                        .and_then(|p| sandwich(fit, &p))
                        .map(|v| v.se)
                        .unwrap_or_default()
                } else {
                    Vec::new()
                };
                row.extend(["ok".to_string(), fit.converged.to_string(), fit.loglik().to_string()]);
                row.extend(fit.params.to_vec().iter().map(f64::to_string));
                row.extend((0..names.len()).map(|i| se.get(i).map(f64::to_string).unwrap_or_default()));
            }
            Err(e) => {
                row.extend([format!("failed: {e}"), String::new(), String::new()]);
                row.extend(std::iter::repeat_n(String::new(), 2 * names.len()));
            }
        }
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(&header, rows)
}

fn config_names(fits: &[episodic::Result<FitResult>]) -> Vec<String> {
    fits.iter()
        .flatten()
        .next()
        .map(|f| f.params.names())
        .unwrap_or_default()
}
