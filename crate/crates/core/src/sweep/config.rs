//! Sweep configuration: a TOML file, command-line overrides, or both.
//!
//! ```toml
//! [system]
//! n = 1200
//! r = 8
//! k_max = 2
//! beta = 2.0          # or: m = 600
//! sigma2 = 0.1        # or: snr_db = 10
//! sigma_x2 = 1.0
//! delta2 = 1e-6
//! weights = "uniform" # or a table: [system.weights] 1 = [...], 2 = [...]
//!
//! [sweep]
//! axis = "sigma2"     # sigma2 | beta | k | delta2
//! values = [0.316, 0.1, 0.0316, 0.01]
//! # snr_db = [5, 10, 15, 20]   (sigma2 axis only)
//! trials = 200
//! seed = 7
//!
//! [output]
//! path = "noise_sweep.csv"
//! format = "csv"      # csv | json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::{OutputFormat, SweepAxis, SweepSpec};
use crate::error::{Error, Result};
use crate::source::{SystemConfig, WeightSpec};

pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_OUTPUT: &str = "sweep.csv";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    system: SystemSection,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    n: Option<usize>,
    r: Option<usize>,
    k_max: Option<usize>,
    m: Option<usize>,
    beta: Option<f64>,
    sigma2: Option<f64>,
    snr_db: Option<f64>,
    sigma_x2: Option<f64>,
    delta2: Option<f64>,
    weights: Option<WeightsField>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum WeightsField {
    Named(String),
    PerCount(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    axis: Option<String>,
    values: Option<Vec<f64>>,
    snr_db: Option<Vec<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    path: Option<PathBuf>,
    format: Option<String>,
}

/// Command-line values; each one that is set replaces the file's value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Signal length N
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of blocks R
    #[arg(long)]
    pub r: Option<usize>,
    /// Maximum number of active blocks K
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,
    /// Measurement count M (alternative to --beta)
    #[arg(long, conflicts_with = "beta")]
    pub m: Option<usize>,
    /// Undersampling ratio N/M; M = round(N/beta)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Noise variance
    #[arg(long, conflicts_with = "snr_db")]
    pub sigma2: Option<f64>,
    /// Noise level as SNR in dB: sigma2 = sigma_x2 * 10^(-snr/10)
    #[arg(long = "snr-db")]
    pub snr_db: Option<f64>,
    /// Variance of active blocks
    #[arg(long = "sigma-x2")]
    pub sigma_x2: Option<f64>,
    /// Variance of inactive blocks
    #[arg(long)]
    pub delta2: Option<f64>,
    /// Mixture weights; only `uniform` can be given on the command line
    #[arg(long)]
    pub weights: Option<String>,
    /// Swept parameter: sigma2, beta, k or delta2
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated sweep values
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub values: Option<Vec<f64>>,
    /// Comma-separated SNR values in dB for a sigma2 sweep
    #[arg(long = "snr-db-values", value_delimiter = ',', num_args = 1.., conflicts_with = "values")]
    pub snr_db_values: Option<Vec<f64>>,
    /// Monte Carlo trials per sweep point; 0 computes theory only
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed; trial i uses the stream (seed, i)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Output format: csv or json (default: from the file extension, else csv)
    #[arg(long)]
    pub format: Option<String>,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigma2" => Ok(SweepAxis::Sigma2),
            "beta" => Ok(SweepAxis::Beta),
            "k" | "k_max" | "k-max" => Ok(SweepAxis::K),
            "delta2" => Ok(SweepAxis::Delta2),
            other => Err(Error::config(
                "axis",
                format!("unknown axis `{other}` (expected sigma2, beta, k or delta2)"),
            )),
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config("format", format!("unknown format `{other}`"))),
        }
    }
}

pub fn snr_db_to_sigma2(snr_db: f64, sigma_x2: f64) -> f64 {
    sigma_x2 * 10f64.powf(-snr_db / 10.0)
}

fn weights_from_field(field: &WeightsField) -> Result<WeightSpec> {
    match field {
        WeightsField::Named(name) if name.eq_ignore_ascii_case("uniform") => {
            Ok(WeightSpec::Uniform)
        }
        WeightsField::Named(name) => Err(Error::config(
            "weights",
            format!("`{name}` is not a weight preset (expected `uniform` or a table)"),
        )),
        WeightsField::PerCount(table) => {
            let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for (key, values) in table {
                let k: usize = key.trim().parse().map_err(|_| {
                    Error::config("weights", format!("key `{key}` is not a block count"))
                })?;
                groups.insert(k, values.clone());
            }
            let expected: Vec<usize> = (1..=groups.len()).collect();
            if groups.keys().copied().collect::<Vec<_>>() != expected {
                return Err(Error::config(
                    "weights",
                    "table keys must be 1, 2, ..., K without gaps",
                ));
            }
            Ok(WeightSpec::PerPattern(groups.into_values().collect()))
        }
    }
}

/// Reads `path` (if any), applies `overrides` and validates every sweep point.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<SweepSpec> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, ov: &Overrides) -> Result<SweepSpec> {
    let file: FileConfig =
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
    let sys = file.system;

    let require = |v: Option<usize>, name: &str| {
        v.ok_or_else(|| Error::config(name, "missing (set it in [system] or with a flag)"))
    };
    let n = require(ov.n.or(sys.n), "n")?;
    let r = require(ov.r.or(sys.r), "r")?;
    let k_max = require(ov.k_max.or(sys.k_max), "k_max")?;
    let sigma_x2 = ov.sigma_x2.or(sys.sigma_x2).unwrap_or(1.0);
    let delta2 = ov.delta2.or(sys.delta2).unwrap_or(0.0);

    // flags beat the file; within one source, an explicit sigma2 beats snr_db
    let sigma2 = match (ov.sigma2, ov.snr_db, sys.sigma2, sys.snr_db) {
        (Some(s), _, _, _) => s,
        (None, Some(db), _, _) => snr_db_to_sigma2(db, sigma_x2),
        (None, None, Some(s), None) => s,
        (None, None, None, Some(db)) => snr_db_to_sigma2(db, sigma_x2),
        (None, None, Some(_), Some(_)) => {
            return Err(Error::config(
                "sigma2",
                "give either sigma2 or snr_db, not both",
            ))
        }
        (None, None, None, None) => {
            return Err(Error::config("sigma2", "missing (set sigma2 or snr_db)"))
        }
    };

    let weights = match (&ov.weights, &sys.weights) {
        (Some(name), _) => weights_from_field(&WeightsField::Named(name.clone()))?,
        (None, Some(field)) => weights_from_field(field)?,
        (None, None) => WeightSpec::Uniform,
    };

    let mut builder = SystemConfig::builder(n, r, k_max)
        .sigma2(sigma2)
        .sigma_x2(sigma_x2)
        .delta2(delta2)
        .weights(weights);
    builder = match (ov.m, ov.beta, sys.m, sys.beta) {
        (Some(m), _, _, _) => builder.measurements(m),
        (None, Some(b), _, _) => builder.beta(b),
        (None, None, Some(m), None) => builder.measurements(m),
        (None, None, None, Some(b)) => builder.beta(b),
        (None, None, Some(_), Some(_)) => {
            return Err(Error::config("beta", "give either m or beta, not both"))
        }
        (None, None, None, None) => return Err(Error::config("beta", "missing (set m or beta)")),
    };
    let base = builder.build()?;

    let sweep = file.sweep;
    let axis: Option<SweepAxis> = ov
        .axis
        .as_deref()
        .or(sweep.axis.as_deref())
        .map(str::parse)
        .transpose()?;
    let snr_values = ov.snr_db_values.clone().or(if ov.values.is_some() {
        None
    } else {
        sweep.snr_db.clone()
    });
    let values = ov.values.clone().or(if ov.snr_db_values.is_some() {
        None
    } else {
        sweep.values.clone()
    });

    let (axis, values) = match (axis, values, snr_values) {
        (_, Some(_), Some(_)) => {
            return Err(Error::config(
                "values",
                "give either values or snr_db, not both",
            ))
        }
        (Some(SweepAxis::Sigma2) | None, None, Some(db)) => (
            SweepAxis::Sigma2,
            db.iter().map(|d| snr_db_to_sigma2(*d, sigma_x2)).collect(),
        ),
        (Some(_), None, Some(_)) => {
            return Err(Error::config(
                "snr_db",
                "SNR values only apply to a sigma2 sweep",
            ))
        }
        (Some(axis), Some(v), None) => (axis, v),
        (None, Some(_), None) => return Err(Error::config("axis", "sweep values need an axis")),
        (Some(axis), None, None) => (axis, vec![axis.value_of(&base)]),
        (None, None, None) => (SweepAxis::Sigma2, vec![base.sigma2()]),
    };
    if values.is_empty() {
        return Err(Error::config("values", "sweep has no points"));
    }

    let output_path = ov
        .output
        .clone()
        .or(file.output.path)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let format = match ov.format.as_deref().or(file.output.format.as_deref()) {
        Some(f) => f.parse()?,
        None if output_path.extension().is_some_and(|e| e == "json") => OutputFormat::Json,
        None => OutputFormat::Csv,
    };

    let spec = SweepSpec {
        base,
        axis,
        values,
        trials: ov.trials.or(sweep.trials).unwrap_or(DEFAULT_TRIALS),
        master_seed: ov.seed.or(sweep.seed).unwrap_or(DEFAULT_SEED),
        output_path,
        format,
    };
    for &v in &spec.values {
        spec.point_config(v)?;
    }
    Ok(spec)
}
