//! Seeded Monte Carlo trials comparing the MMSE estimator, the genie-aided
//! estimator and the large-system prediction.
//!
//! Trial `i` of an experiment draws everything from a ChaCha8 stream keyed by
//! `(master_seed, i)`, so results do not depend on thread count or scheduling.
//! Aggregates are pairwise sums taken in trial order.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mmse::mmse_estimate;
use crate::replica::{theoretical_mmse, FixedPointOptions, ReplicaSolution};
use crate::source::{
    sample_measurement, sample_source, ComponentIndex, MixtureComponent, SystemConfig,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "BLOCKSPARSE_THREADS";

/// z-value of the two-sided 95% normal interval.
const Z95: f64 = 1.96;

/// Relative slack of the MMSE-vs-genie consistency check.
pub const GENIE_REL_TOL: f64 = 0.05;

/// Random stream for one trial.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Hardware concurrency, capped by `BLOCKSPARSE_THREADS` when set.
pub fn default_parallelism() -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(cap) if cap > 0 => cap.min(hw),
        _ => hw,
    }
}

/// Squared errors normalized by the signal length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SquaredErrors {
    pub mmse: f64,
    pub genie: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub component: ComponentIndex,
    /// `None` when the trial failed numerically.
    pub errors: Option<SquaredErrors>,
    pub jittered: bool,
    pub failure: Option<String>,
}

fn mean_sq_diff(x: &[f64], est: &[f64]) -> f64 {
    let sq: Vec<f64> = x.iter().zip(est).map(|(a, b)| (a - b) * (a - b)).collect();
    pairwise_sum(&sq) / x.len() as f64
}

/// Runs one trial. The genie estimate is the true component's Wiener estimate,
/// taken from the same evaluation that produced the MMSE estimate.
pub fn run_trial(
    config: &SystemConfig,
    components: &[MixtureComponent],
    master_seed: u64,
    trial: u64,
) -> TrialResult {
    let mut rng = trial_rng(master_seed, trial);
    let failed = |component, msg: String| TrialResult {
        trial,
        component,
        errors: None,
        jittered: false,
        failure: Some(msg),
    };
    let placeholder = ComponentIndex { k: 0, l: 0 };

    let (x, which) = match sample_source(components, &mut rng) {
        Ok(v) => v,
        Err(e) => return failed(placeholder, e.to_string()),
    };
    let component = components[which].index;
    let inst = match sample_measurement(x, component, config, &mut rng) {
        Ok(v) => v,
        Err(e) => return failed(component, e.to_string()),
    };
    let report = match mmse_estimate(&inst.y, inst.a.as_ref(), components, config.sigma2()) {
        Ok(r) => r,
        Err(e) => return failed(component, e.to_string()),
    };
    let genie = report
        .component_estimate(component)
        .expect("true component is part of the mixture");

    TrialResult {
        trial,
        component,
        errors: Some(SquaredErrors {
            mmse: mean_sq_diff(&inst.x, &report.estimate),
            genie: mean_sq_diff(&inst.x, genie),
        }),
        jittered: report.jittered,
        failure: None,
    }
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean with a normal-approximation 95% interval half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: Option<f64>,
    /// Half-width; `None` for a single sample.
    pub ci95: Option<f64>,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len();
        let mean = pairwise_sum(v) / n as f64;
        let (std_err, ci95) = if n >= 2 {
            let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            let var = pairwise_sum(&dev) / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            (Some(se), Some(Z95 * se))
        } else {
            (None, None)
        };
        MeanEstimate {
            mean,
            std_err,
            ci95,
            samples: n,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: SystemConfig,
    pub master_seed: u64,
    /// Requested trial count.
    pub trials: usize,
    pub failed_trials: usize,
    pub jittered_trials: usize,
    pub mse_mmse: MeanEstimate,
    pub mse_genie: MeanEstimate,
    pub mse_theory: f64,
    pub theory: ReplicaSolution,
    pub realized_beta: f64,
    pub wall_time: Duration,
    pub trial_results: Vec<TrialResult>,
}

/// Runs `n_trials` seeded trials on up to `parallelism` threads and aggregates them.
pub fn run_experiment(
    config: &SystemConfig,
    n_trials: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<ExperimentResult> {
    if n_trials == 0 {
        return Err(Error::invalid("an experiment needs at least one trial"));
    }
    let started = Instant::now();
    let theory = theoretical_mmse(config, &FixedPointOptions::default())?;
    let components = config.components();
    let work = |i: usize| run_trial(config, &components, master_seed, i as u64);

    let trial_results: Vec<TrialResult> = if parallelism <= 1 {
        (0..n_trials).map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_trials).into_par_iter().map(work).collect())
    };

    let ok: Vec<SquaredErrors> = trial_results.iter().filter_map(|t| t.errors).collect();
    if ok.is_empty() {
        return Err(Error::AllTrialsFailed(n_trials));
    }
    let mmse: Vec<f64> = ok.iter().map(|e| e.mmse).collect();
    let genie: Vec<f64> = ok.iter().map(|e| e.genie).collect();

    Ok(ExperimentResult {
        config: config.clone(),
        master_seed,
        trials: n_trials,
        failed_trials: n_trials - ok.len(),
        jittered_trials: trial_results.iter().filter(|t| t.jittered).count(),
        mse_mmse: MeanEstimate::from_samples(&mmse),
        mse_genie: MeanEstimate::from_samples(&genie),
        mse_theory: theory.total_mse,
        realized_beta: config.beta(),
        theory,
        wall_time: started.elapsed(),
        trial_results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorComparison {
    pub mse_mmse: f64,
    pub mse_genie: f64,
    pub mse_theory: f64,
    pub mmse_over_theory: f64,
    pub genie_over_theory: f64,
    pub mmse_over_genie: f64,
    /// `sqrt(ci_mmse^2 + ci_genie^2)`, zero when either interval is undefined.
    pub combined_ci95: f64,
    /// `|mse_mmse - mse_genie| <= max(5% of mse_genie, 2 * combined_ci95)`.
    pub genie_consistent: bool,
    pub note: Option<String>,
}

pub fn compare_estimators(experiment: &ExperimentResult) -> EstimatorComparison {
    let m = experiment.mse_mmse.mean;
    let g = experiment.mse_genie.mean;
    let t = experiment.mse_theory;
    let combined_ci95 = match (experiment.mse_mmse.ci95, experiment.mse_genie.ci95) {
        (Some(a), Some(b)) => a.hypot(b),
        _ => 0.0,
    };
    let genie_consistent = (m - g).abs() <= (GENIE_REL_TOL * g).max(2.0 * combined_ci95);
    let note = (!genie_consistent).then(|| {
        format!(
            "N = {}: the MMSE and genie-aided errors agree only in the large-system limit",
            experiment.config.n()
        )
    });
    EstimatorComparison {
        mse_mmse: m,
        mse_genie: g,
        mse_theory: t,
        mmse_over_theory: m / t,
        genie_over_theory: g / t,
        mmse_over_genie: m / g,
        combined_ci95,
        genie_consistent,
        note,
    }
}
