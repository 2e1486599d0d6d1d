#![allow(dead_code)]

use faer::Mat;

use blocksparse::mmse::mmse_estimate;
use blocksparse::mmse::oracle::{oracle_posterior_mean, GridSpec};
use blocksparse::monte_carlo::trial_rng;
use blocksparse::source::{sample_measurement, sample_source, MixtureComponent, SystemConfig};

pub struct Instance {
    pub config: SystemConfig,
    pub components: Vec<MixtureComponent>,
    pub x: Vec<f64>,
    pub a: Mat<f64>,
    pub y: Vec<f64>,
}

pub fn draw(config: &SystemConfig, seed: u64, trial: u64) -> Instance {
    let components = config.components();
    let mut rng = trial_rng(seed, trial);
    let (x, which) = sample_source(&components, &mut rng).unwrap();
    let inst = sample_measurement(x, components[which].index, config, &mut rng).unwrap();
    Instance {
        config: config.clone(),
        components,
        x: inst.x,
        a: inst.a,
        y: inst.y,
    }
}

/// Two-entry signal with one unit-variance block out of two, measured by one
/// or two rows.
pub fn tiny_config(sigma2: f64, m: usize) -> SystemConfig {
    SystemConfig::builder(2, 2, 1)
        .measurements(m)
        .sigma2(sigma2)
        .build()
        .unwrap()
}

/// Largest entrywise gap between the closed-form estimate and quadrature.
pub fn oracle_gap(inst: &Instance) -> f64 {
    let sigma2 = inst.config.sigma2();
    let exact = mmse_estimate(&inst.y, inst.a.as_ref(), &inst.components, sigma2)
        .unwrap()
        .estimate;
    let grid = GridSpec::symmetric(inst.config.n(), 12.0, 4001);
    let quad =
        oracle_posterior_mean(&inst.y, inst.a.as_ref(), &inst.components, sigma2, &grid).unwrap();
    exact
        .iter()
        .zip(&quad)
        .map(|(e, q)| (e - q).abs())
        .fold(0.0, f64::max)
}

/// The 20 oracle instances: sigma2 alternates between 0.1 and 1, M between 1 and 2.
pub fn oracle_instances() -> Vec<Instance> {
    (0..20u64)
        .map(|i| {
            let sigma2 = if i % 2 == 0 { 0.1 } else { 1.0 };
            let m = 1 + (i / 2 % 2) as usize;
            draw(&tiny_config(sigma2, m), 2024, i)
        })
        .collect()
}

pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn sq_err(x: &[f64], est: &[f64]) -> f64 {
    x.iter()
        .zip(est)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64
}
