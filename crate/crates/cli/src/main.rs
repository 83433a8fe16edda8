//! `episodic`: simulate, fit, diagnose and compare episodic posting models.

mod commands;
mod config;
mod error;
mod io;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{analyze, benchmark, fit, gof, simulate};

#[derive(Debug, Parser)]
#[command(name = "episodic", version, about = "Episodic point-process models of posting activity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw an event sequence from a parameter file.
    Simulate(simulate::SimulateArgs),
    /// Estimate the model from an events CSV.
    Fit(fit::FitArgs),
    /// Goodness-of-fit diagnostics for a fitted model.
    Gof(gof::GofArgs),
    /// Fit many users and summarize them as a cohort.
    Analyze(analyze::AnalyzeArgs),
    /// Time the EM fit against direct numerical maximization.
    Benchmark(benchmark::BenchmarkArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Gof(a) => gof::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Benchmark(a) => benchmark::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
