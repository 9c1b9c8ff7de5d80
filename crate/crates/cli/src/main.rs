//! `brl`: experiment runner and verification driver.
//!
//! Exit codes: 0 on success, 1 when a check or a seed fails, 2 for usage
//! and configuration errors.

mod config;
mod run;
mod verify;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use brl_core::diagnostics::format_f64;
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format};
use run::Experiment;
use verify::Suite;

#[derive(Parser)]
#[command(name = "brl", version, about = "Batch value-function approximation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite and write a JSON report of its checks.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step concentrability table for the chain model.
    Chain {
        #[arg(long, default_value_t = 2)]
        length: usize,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment config, one report row per seed and algorithm.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's output format.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Per-iteration FQI Bellman error on the two-state instance.
    FqiGap {
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Shuffle seed of the grid class.
        #[arg(long, default_value_t = verify::COUNTEREXAMPLE_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(anyhow::Error),
    Check(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Check(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_verify(suite: Suite, seed: u64, out: Option<&Path>) -> Result<bool, Failure> {
    let checks = verify::run_suite(suite, seed)?;
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, &checks)?;
    writeln!(w)?;
    w.flush()?;
    for c in checks.iter().filter(|c| !c.passed()) {
        eprintln!(
            "FAIL {}: measured {} against threshold {}",
            c.check_name, c.measured, c.threshold
        );
    }
    Ok(checks.iter().all(|c| c.passed()))
}

fn cmd_chain(length: usize, gamma: f64, out: Option<&Path>) -> Result<bool, Failure> {
    let (rows, ceff, cinf) = verify::chain_errors(length, gamma).map_err(usage)?;
    let mut w = csv::Writer::from_writer(open_out(out)?);
    w.write_record(["t", "C_t_computed", "C_t_formula"])?;
    let mut ok = true;
    for (t, (computed, formula)) in rows.iter().enumerate() {
        ok &= verify::relative_gap(*computed, *formula) <= 1e-12;
        w.write_record([t.to_string(), format_f64(*computed), format_f64(*formula)])?;
    }
    for (name, value) in [("c_eff", ceff), ("c_inf", cinf)] {
        ok &= (value - 1.0).abs() <= 1e-12;
        w.write_record([name.to_string(), format_f64(value), format_f64(1.0)])?;
    }
    w.flush()?;
    Ok(ok)
}

fn cmd_run(config: &Path, out: Option<PathBuf>, format: Option<Format>) -> Result<bool, Failure> {
    let cfg = ExperimentConfig::load(config).map_err(usage)?;
    let out = out.or_else(|| cfg.output.path.clone());
    let format = format.unwrap_or(cfg.output.format);
    let experiment = Experiment::build(cfg)
        .context("building the experiment")
        .map_err(usage)?;
    let (rows, failures) = experiment.run();
    run::write_rows(&rows, format, open_out(out.as_deref())?)?;
    for (seed, e) in &failures {
        eprintln!("seed {seed} failed: {e}");
    }
    Ok(failures.is_empty())
}

fn cmd_fqi_gap(
    iters: usize,
    gamma: f64,
    seed: u64,
    format: Format,
    out: Option<&Path>,
) -> Result<bool, Failure> {
    let trace = verify::fqi_gap_trace(gamma, iters, seed).map_err(usage)?;
    let mut w = open_out(out)?;
    match format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["iteration", "chosen_index", "q_s1", "q_s2", "bellman_error_sq"])?;
            for (t, (index, q, err)) in trace.iter().enumerate() {
                csv.write_record([
                    (t + 1).to_string(),
                    index.to_string(),
                    format_f64(q.get(0, 0)),
                    format_f64(q.get(1, 0)),
                    format_f64(*err),
                ])?;
            }
            csv.flush()?;
        }
        Format::Json => {
            let rows: Vec<_> = trace
                .iter()
                .enumerate()
                .map(|(t, (index, q, err))| {
                    serde_json::json!({
                        "iteration": t + 1,
                        "chosen_index": index,
                        "q_s1": q.get(0, 0),
                        "q_s2": q.get(1, 0),
                        "bellman_error_sq": err,
                    })
                })
                .collect();
            serde_json::to_writer_pretty(&mut w, &rows)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify { suite, seed, out } => cmd_verify(suite, seed, out.as_deref()),
        Command::Chain { length, gamma, out } => cmd_chain(length, gamma, out.as_deref()),
        Command::Run {
            config,
            out,
            format,
        } => cmd_run(&config, out, format),
        Command::FqiGap {
            iters,
            gamma,
            seed,
            format,
            out,
        } => cmd_fqi_gap(iters, gamma, seed, format, out.as_deref()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Check(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
