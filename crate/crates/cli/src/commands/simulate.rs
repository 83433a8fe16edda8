use std::path::PathBuf;

use clap::Args;
use episodic::{simulate, EventSequence, LabelAssignment};

use crate::config::{load_toml, SimulateConfig};
use crate::error::{CliError, Result};
use crate::io::{events_csv, labels_csv, write_atomic};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file with `T`, optional `seed` and `truncation`, and a `[params]` table.
    pub config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Events CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the true parent labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let config: SimulateConfig = load_toml(&args.config)?;
    config
        .params
        .validate()
        .map_err(|e| CliError::data(format!("{}: [params]: {e}", args.config.display())))?;
    let horizon = config.horizon;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(CliError::data(format!("{}: T must be non-negative, got {horizon}", args.config.display())));
    }
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let (events, labels) = if horizon == 0.0 {
        (EventSequence::empty(0.0, 0.0), LabelAssignment { labels: Vec::new() })
    } else {
        let sim = simulate(&config.params, horizon, seed, config.truncation)?;
        (sim.events, sim.labels)
    };
    let events_bytes = events_csv(&events)?;
    let label_bytes = args.labels.as_ref().map(|_| labels_csv(&events, &labels)).transpose()?;
    write_atomic(&args.out, &events_bytes)?;
    if let (Some(path), Some(bytes)) = (&args.labels, label_bytes) {
        write_atomic(path, &bytes)?;
    }
    eprintln!("simulated {} events on [0, {horizon}] with seed {seed}", events.len());
    Ok(())
}
