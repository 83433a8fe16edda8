use std::path::PathBuf;

use clap::Args;
use episodic::clem::e_step;
use episodic::gof::{envelope, offspring_cdf_check, rescaled_parent_check, rescaled_parent_gaps, CdfCheck, DEFAULT_GRID};
use episodic::{partition, Mark, Truncation};
use serde::Serialize;

use crate::commands::fit::FitOutput;
use crate::error::{CliError, Result};
use crate::io::{csv_bytes, read_events, read_text, write_atomic, write_json};

#[derive(Debug, Args)]
pub struct GofArgs {
    /// Events CSV the fit was computed from.
    pub events: PathBuf,
    /// Fit JSON written by `episodic fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Window length; defaults to the one recorded in the fit.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Simulated replicates behind the envelope.
    #[arg(long, default_value_t = 99)]
    pub w: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Points on each CDF grid.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, value_parser = parse_truncation, default_value = "drop")]
    pub truncation: Truncation,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_truncation(s: &str) -> std::result::Result<Truncation, String> {
    match s {
        "drop" => Ok(Truncation::Drop),
        "strict" => Ok(Truncation::Strict),
        _ => Err(format!("expected `drop` or `strict`, got `{s}`")),
    }
}

#[derive(Serialize)]
struct CheckSummary {
    sup_distance: f64,
    outside_fraction: f64,
}

impl From<&CdfCheck> for CheckSummary {
    fn from(c: &CdfCheck) -> Self {
        CheckSummary {
            sup_distance: c.sup_distance(),
            outside_fraction: c.outside_fraction(),
        }
    }
}

#[derive(Serialize)]
struct Summary {
    w: usize,
    seed: u64,
    envelope_coverage: f64,
    empty_replicates: usize,
    offspring_original: Option<CheckSummary>,
    offspring_repost: Option<CheckSummary>,
    rescaled_parent: Option<CheckSummary>,
}

/// `points` quantile-spaced values of `values`, deduplicated.
fn quantile_grid(mut values: Vec<f64>, points: usize) -> Vec<f64> {
    values.retain(|v| v.is_finite());
    if values.is_empty() || points == 0 {
        return Vec::new();
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut grid: Vec<f64> = (0..points)
        .map(|k| {
            let pos = if points == 1 { 0.0 } else { k as f64 * (n - 1) as f64 / (points - 1) as f64 };
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
        })
        .collect();
    grid.dedup();
    grid
}

fn check_csv(check: &CdfCheck) -> Result<Vec<u8>> {
    let rows = (0..check.grid.len()).map(|k| {
        (check.grid[k], check.empirical[k], check.model[k], check.ci_lo[k], check.ci_hi[k])
    });
    csv_bytes(&["v", "F_hat", "F_model", "ci_lo", "ci_hi"], rows)
}

pub fn run(args: &GofArgs) -> Result<()> {
    if args.w == 0 {
        return Err(CliError::data("--w must be at least 1"));
    }
    if args.grid < 2 {
        return Err(CliError::data("--grid must be at least 2"));
    }
    let fit: FitOutput = serde_json::from_str(&read_text(&args.fit)?)
        .map_err(|e| CliError::data(format!("{}: {e}", args.fit.display())))?;
    fit.params.validate()?;
    let events = read_events(&args.events)?.into_sequence(Some(args.horizon.unwrap_or(fit.horizon)))?;
    if events.is_empty() {
        return Err(CliError::data(format!("{}: no events", args.events.display())));
    }

    let env = envelope(&events, &fit.params, args.w, &episodic::gof::default_v_grid(&events, args.grid), args.seed, args.truncation)?;
    let rows = (0..env.grid.len()).map(|k| (env.grid[k], env.observed[k], env.mean[k], env.upper[k], env.lower[k]));
    let mut files = vec![("envelope.csv".to_string(), csv_bytes(&["v", "F_hat", "F_bar", "U", "L"], rows)?)];

    let parts = partition(&events, fit.config.sub_window_length)?;
    let (_, stats) = e_step(&parts, &fit.params);
    let mut checks = Vec::new();
    for (mark, name) in [(Mark::Original, "offspring_original"), (Mark::Repost, "offspring_repost")] {
        let gaps = stats.events.iter().filter(|e| e.mark == mark).map(|e| e.gap()).collect();
        let check = offspring_cdf_check(&stats, &fit.params, mark, &quantile_grid(gaps, args.grid)).ok();
        checks.push((name, check));
    }
    let rescaled = rescaled_parent_gaps(&stats, &fit.params).into_iter().map(|(v, _)| v).collect();
    checks.push(("rescaled_parent", rescaled_parent_check(&stats, &fit.params, &quantile_grid(rescaled, args.grid)).ok()));
    for (name, check) in &checks {
        match check {
            Some(c) => files.push((format!("{name}.csv"), check_csv(c)?)),
            None => eprintln!("warning: {name}: no posterior weight, diagnostic skipped"),
        }
    }

    let summary = Summary {
        w: args.w,
        seed: args.seed,
        envelope_coverage: env.coverage(),
        empty_replicates: env.empty_replicates,
        offspring_original: checks[0].1.as_ref().map(Into::into),
        offspring_repost: checks[1].1.as_ref().map(Into::into),
        rescaled_parent: checks[2].1.as_ref().map(Into::into),
    };
    for (file, bytes) in files {
        write_atomic(&args.out_dir.join(file), &bytes)?;
    }
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    Ok(())
}
