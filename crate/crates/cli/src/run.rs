//! Seeded experiment runs: data, solvers and one bound report per
//! `(seed, algorithm)` pair.

use std::io::Write;

use anyhow::{Context, Result};
use brl_core::data::generate_batch;
use brl_core::diagnostics::{bound_report, format_f64, ReportRequest};
use brl_core::solvers::{fqi, mabo, msbo, LossSource};
use brl_core::{Algorithm, BoundReport, DataDistribution, QClass, TabularMdp, WClass};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Format, Mode};

#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub chosen_index: usize,
    pub objective_value: f64,
    #[serde(flatten)]
    pub report: BoundReport,
}

/// Everything derived from the config before any seed runs.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub mdp: TabularMdp,
    pub mu: DataDistribution,
    pub q_class: QClass,
    pub f_class: Option<QClass>,
    pub w_class: WClass,
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> brl_core::Result<Self> {
        let mdp = config.mdp.build()?;
        let mu = config.mu.build(&mdp)?;
        let q_class = config.q_class.build_q(&mdp)?;
        let f_class = config.f_class.as_ref().map(|f| f.build_q(&mdp)).transpose()?;
        let w_class = config.w_class.build_w(&mdp, &mu, &q_class)?;
        Ok(Self {
            config,
            mdp,
            mu,
            q_class,
            f_class,
            w_class,
        })
    }

    pub fn run_seed(&self, seed: u64) -> brl_core::Result<Vec<RunRow>> {
        let cfg = &self.config;
        let data = match cfg.mode {
            Mode::Empirical => Some(generate_batch(&self.mdp, &self.mu, cfg.n, seed)?),
            Mode::Population => None,
        };
        let source = match &data {
            Some(d) => LossSource::empirical(d, self.mdp.gamma()),
            None => LossSource::population(&self.mdp, &self.mu),
        };
        let n = data.as_ref().map(|d| d.len());
        let f_class = self.f_class.as_ref().unwrap_or(&self.q_class);
        cfg.algorithms
            .iter()
            .map(|&algorithm| {
                let result = match algorithm {
                    Algorithm::Fqi => fqi(source, &self.q_class, cfg.fqi_iterations, cfg.fqi_init)?,
                    Algorithm::Msbo => msbo(source, &self.q_class, f_class)?,
                    Algorithm::Mabo => mabo(source, &self.q_class, &self.w_class)?,
                };
                let report = bound_report(&ReportRequest {
                    mdp: &self.mdp,
                    mu: &self.mu,
                    q_class: &self.q_class,
                    f_class: Some(f_class),
                    w_class: &self.w_class,
                    chosen_q: &result.chosen_q,
                    n,
                    delta: cfg.delta,
                    t_max: cfg.t_max,
                })?;
                Ok(RunRow {
                    seed,
                    algorithm,
                    chosen_index: result.chosen_index,
                    objective_value: result.objective_value,
                    report,
                })
            })
            .collect()
    }

    /// Runs every seed in parallel. Rows come back in config seed order; a
    /// failing seed is reported and skipped.
    pub fn run(&self) -> (Vec<RunRow>, Vec<(u64, brl_core::Error)>) {
        let results: Vec<_> = self
            .config
            .seeds
            .par_iter()
            .map(|&seed| (seed, self.run_seed(seed)))
            .collect();
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (seed, r) in results {
            match r {
                Ok(mut r) => rows.append(&mut r),
                Err(e) => failures.push((seed, e)),
            }
        }
        (rows, failures)
    }
}

pub fn csv_header() -> Vec<&'static str> {
    let mut header = vec!["seed", "algorithm", "chosen_index", "objective_value"];
    header.extend(BoundReport::CSV_FIELDS);
    header
}

pub fn write_rows<W: Write>(rows: &[RunRow], format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(csv_header())?;
            for row in rows {
                let mut record = vec![
                    row.seed.to_string(),
                    row.algorithm.name().to_string(),
                    row.chosen_index.to_string(),
                    format_f64(row.objective_value),
                ];
                record.extend(row.report.csv_values());
                w.write_record(record)?;
            }
            w.flush().context("writing CSV rows")?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
