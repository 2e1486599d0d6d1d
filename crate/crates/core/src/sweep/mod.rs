//! Parameter sweeps: one row of theory and Monte Carlo results per point,
//! written as CSV or JSON.

mod config;

pub use config::{
    parse_config, parse_config_str, snr_db_to_sigma2, Overrides, DEFAULT_OUTPUT, DEFAULT_SEED,
    DEFAULT_TRIALS,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::monte_carlo::run_experiment;
use crate::replica::{theoretical_mmse, FixedPointOptions};
use crate::source::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Sigma2,
    Beta,
    K,
    Delta2,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Sigma2 => "sigma2",
            SweepAxis::Beta => "beta",
            SweepAxis::K => "k",
            SweepAxis::Delta2 => "delta2",
        }
    }

    /// Current value of this parameter in `config`.
    pub fn value_of(self, config: &SystemConfig) -> f64 {
        match self {
            SweepAxis::Sigma2 => config.sigma2(),
            SweepAxis::Beta => config.beta(),
            SweepAxis::K => config.k_max() as f64,
            SweepAxis::Delta2 => config.delta2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Trials per point; zero skips the simulation.
    pub trials: usize,
    pub master_seed: u64,
    pub output_path: PathBuf,
    pub format: OutputFormat,
}

impl SweepSpec {
    /// The base configuration with the swept parameter set to `value`.
    pub fn point_config(&self, value: f64) -> Result<SystemConfig> {
        let b = self.base.to_builder();
        match self.axis {
            SweepAxis::Sigma2 => b.sigma2(value).build(),
            SweepAxis::Beta => b.beta(value).build(),
            SweepAxis::Delta2 => b.delta2(value).build(),
            SweepAxis::K => {
                if !self.base.has_uniform_weights() {
                    return Err(Error::config(
                        "weights",
                        "a sweep over k needs uniform weights",
                    ));
                }
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config(
                        "values",
                        format!("k = {value} is not a positive integer"),
                    ));
                }
                SystemConfig::builder(self.base.n(), self.base.blocks(), value as usize)
                    .measurements(self.base.m())
                    .sigma2(self.base.sigma2())
                    .sigma_x2(self.base.sigma_x2())
                    .delta2(self.base.delta2())
                    .build()
            }
        }
    }
}

pub const CSV_HEADER: [&str; 23] = [
    "axis",
    "value",
    "n",
    "m",
    "q",
    "r",
    "k_max",
    "beta_realized",
    "sigma2",
    "delta2",
    "trials",
    "mse_theory",
    "mse_mc_mmse",
    "ci95_mmse",
    "mse_mc_genie",
    "ci95_genie",
    "failed_trials",
    "converged",
    "seed",
    "wall_time_ms",
    "status",
    "sigma_x2",
    "weights",
];

/// One sweep point. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub r: usize,
    pub k_max: usize,
    pub beta_realized: f64,
    pub sigma2: f64,
    pub delta2: f64,
    pub trials: usize,
    pub mse_theory: Option<f64>,
    pub mse_mc_mmse: Option<f64>,
    pub ci95_mmse: Option<f64>,
    pub mse_mc_genie: Option<f64>,
    pub ci95_genie: Option<f64>,
    pub failed_trials: Option<usize>,
    /// The replica fixed point converged for every component.
    pub converged: bool,
    pub seed: u64,
    pub wall_time_ms: u64,
    /// `ok`, `not_converged`, or `error: ...`.
    pub status: String,
    pub sigma_x2: f64,
    /// `uniform` or `explicit`.
    pub weights: &'static str,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub path: PathBuf,
}

impl SweepOutcome {
    /// Every point succeeded and its fixed point converged.
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(SweepRow::is_ok)
    }
}

/// Evaluates one sweep point. Failures are recorded in the row, not returned.
pub fn run_point(spec: &SweepSpec, value: f64, parallelism: usize) -> SweepRow {
    let started = std::time::Instant::now();
    let cfg = match spec.point_config(value) {
        Ok(cfg) => cfg,
        Err(e) => {
            let mut row = empty_row(spec, &spec.base, value);
            row.status = format!("error: {e}");
            return row;
        }
    };
    let mut row = empty_row(spec, &cfg, value);
    let mut errors = Vec::new();

    match theoretical_mmse(&cfg, &FixedPointOptions::default()) {
        Ok(sol) => {
            row.mse_theory = Some(sol.total_mse);
            row.converged = sol.converged;
        }
        Err(e) => errors.push(format!("theory: {e}")),
    }
    if spec.trials > 0 {
        match run_experiment(&cfg, spec.trials, spec.master_seed, parallelism) {
            Ok(exp) => {
                row.mse_mc_mmse = Some(exp.mse_mmse.mean);
                row.ci95_mmse = exp.mse_mmse.ci95;
                row.mse_mc_genie = Some(exp.mse_genie.mean);
                row.ci95_genie = exp.mse_genie.ci95;
                row.failed_trials = Some(exp.failed_trials);
            }
            Err(Error::AllTrialsFailed(n)) => {
                row.failed_trials = Some(n);
                errors.push(format!("simulation: all {n} trials failed"));
            }
            Err(e) => errors.push(format!("simulation: {e}")),
        }
    }

    row.status = if !errors.is_empty() {
        format!("error: {}", errors.join("; "))
    } else if !row.converged {
        "not_converged".to_string()
    } else {
        "ok".to_string()
    };
    row.wall_time_ms = started.elapsed().as_millis() as u64;
    row
}

fn empty_row(spec: &SweepSpec, cfg: &SystemConfig, value: f64) -> SweepRow {
    SweepRow {
        axis: spec.axis.name(),
        value,
        n: cfg.n(),
        m: cfg.m(),
        q: cfg.block_len(),
        r: cfg.blocks(),
        k_max: cfg.k_max(),
        beta_realized: cfg.beta(),
        sigma2: cfg.sigma2(),
        delta2: cfg.delta2(),
        trials: spec.trials,
        mse_theory: None,
        mse_mc_mmse: None,
        ci95_mmse: None,
        mse_mc_genie: None,
        ci95_genie: None,
        failed_trials: None,
        converged: false,
        seed: spec.master_seed,
        wall_time_ms: 0,
        status: String::new(),
        sigma_x2: cfg.sigma_x2(),
        weights: if cfg.has_uniform_weights() {
            "uniform"
        } else {
            "explicit"
        },
    }
}

/// Runs every point in order and writes the table to `spec.output_path`.
/// The file is created before any work starts.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize) -> Result<SweepOutcome> {
    let path = &spec.output_path;
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let rows: Vec<SweepRow> = spec
        .values
        .iter()
        .map(|&v| run_point(spec, v, parallelism))
        .collect();
    write_to(&rows, file, path, spec.format)?;
    Ok(SweepOutcome {
        rows,
        path: path.clone(),
    })
}

pub fn write_rows(rows: &[SweepRow], path: &Path, format: OutputFormat) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_to(rows, file, path, format)
}

fn write_to(rows: &[SweepRow], file: File, path: &Path, format: OutputFormat) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(file);
    match format {
        OutputFormat::Csv => write_csv(rows, &mut out)?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)
                .map_err(|e| Error::Output(e.to_string()))?;
            out.write_all(b"\n").map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let out_err = |e: csv::Error| Error::Output(e.to_string());
    w.write_record(CSV_HEADER).map_err(out_err)?;
    for row in rows {
        w.serialize(row).map_err(out_err)?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}
