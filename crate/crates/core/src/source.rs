//! Block-sparse Gaussian-mixture source and the random measurement model.
//!
//! A signal of length `N = Q * R` is split into `R` blocks of length `Q`.
//! Each mixture component `(k, l)` activates `k` of the blocks (the `l`-th
//! arrangement in lexicographic order) with variance `sigma_x2`; the other
//! blocks carry the small variance `delta2`. All block and pattern indices in
//! this crate are zero-based; `k` is a count and runs over `1..=K`.

use std::fmt;

use faer::{ColRef, Mat};
use itertools::Itertools;
use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Guard against configurations whose pattern count cannot be enumerated.
pub const MAX_COMPONENTS: usize = 200_000;

/// Identifies one mixture component: `k` active blocks in arrangement `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentIndex {
    pub k: usize,
    pub l: usize,
}

impl fmt::Display for ComponentIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(k={}, l={})", self.k, self.l)
    }
}

/// How the number of measurements is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurements {
    Count(usize),
    /// Undersampling ratio `beta = N / M`; `M` is rounded to the nearest integer.
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// Every pattern of every `k <= K` is equally likely.
    Uniform,
    /// `weights[k - 1][l]` is the prior probability of component `(k, l)`.
    PerPattern(Vec<Vec<f64>>),
}

/// Fully resolved and validated problem description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    n: usize,
    q: usize,
    r: usize,
    k_max: usize,
    m: usize,
    sigma2: f64,
    sigma_x2: f64,
    delta2: f64,
    uniform_weights: bool,
    weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SystemConfigBuilder {
    n: usize,
    r: usize,
    k_max: usize,
    measurements: Option<Measurements>,
    sigma2: f64,
    sigma_x2: f64,
    delta2: f64,
    weights: WeightSpec,
}

impl SystemConfigBuilder {
    pub fn measurements(mut self, m: usize) -> Self {
        self.measurements = Some(Measurements::Count(m));
        self
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.measurements = Some(Measurements::Ratio(beta));
        self
    }

    pub fn sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn sigma_x2(mut self, sigma_x2: f64) -> Self {
        self.sigma_x2 = sigma_x2;
        self
    }

    pub fn delta2(mut self, delta2: f64) -> Self {
        self.delta2 = delta2;
        self
    }

    pub fn weights(mut self, weights: WeightSpec) -> Self {
        self.weights = weights;
        self
    }

    pub fn build(self) -> Result<SystemConfig> {
        let SystemConfigBuilder {
            n,
            r,
            k_max,
            measurements,
            sigma2,
            sigma_x2,
            delta2,
            weights,
        } = self;

        if n == 0 || r == 0 {
            return Err(Error::config(
                "n",
                "signal length and block count must be positive",
            ));
        }
        if n % r != 0 {
            return Err(Error::config(
                "r",
                format!("signal length {n} is not a multiple of the block count {r}"),
            ));
        }
        if k_max == 0 || k_max > r {
            return Err(Error::config(
                "k_max",
                format!("need 1 <= K <= R, got K = {k_max}, R = {r}"),
            ));
        }
        let m = match measurements {
            None => return Err(Error::config("m", "measurement count or beta is required")),
            Some(Measurements::Count(m)) => m,
            Some(Measurements::Ratio(beta)) => {
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(Error::config(
                        "beta",
                        format!("must be positive, got {beta}"),
                    ));
                }
                (n as f64 / beta).round() as usize
            }
        };
        if m == 0 {
            return Err(Error::config("m", "measurement count must be at least 1"));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::config(
                "sigma2",
                format!("must be finite and >= 0, got {sigma2}"),
            ));
        }
        if !(sigma_x2.is_finite() && sigma_x2 > 0.0) {
            return Err(Error::config(
                "sigma_x2",
                format!("must be positive, got {sigma_x2}"),
            ));
        }
        if !(delta2.is_finite() && delta2 >= 0.0) {
            return Err(Error::config(
                "delta2",
                format!("must be finite and >= 0, got {delta2}"),
            ));
        }
        if delta2 >= sigma_x2 {
            return Err(Error::config(
                "delta2",
                format!("inactive variance {delta2} must be below the active variance {sigma_x2}"),
            ));
        }

        let counts: Vec<usize> = (1..=k_max).map(|k| binomial(r, k)).collect();
        let total = counts.iter().try_fold(0usize, |acc, &c| acc.checked_add(c));
        match total {
            Some(t) if t <= MAX_COMPONENTS => {}
            _ => {
                return Err(Error::config(
                    "k_max",
                    format!("more than {MAX_COMPONENTS} mixture components"),
                ))
            }
        }

        let (uniform_weights, weights) = match weights {
            WeightSpec::Uniform => {
                let total: usize = counts.iter().sum();
                let w = 1.0 / total as f64;
                (true, counts.iter().map(|&c| vec![w; c]).collect())
            }
            WeightSpec::PerPattern(w) => {
                validate_weights(&w, &counts)?;
                (false, w)
            }
        };

        Ok(SystemConfig {
            n,
            q: n / r,
            r,
            k_max,
            m,
            sigma2,
            sigma_x2,
            delta2,
            uniform_weights,
            weights,
        })
    }
}

fn validate_weights(w: &[Vec<f64>], counts: &[usize]) -> Result<()> {
    if w.len() != counts.len() {
        return Err(Error::config(
            "weights",
            format!(
                "expected weights for k = 1..={}, got {} groups",
                counts.len(),
                w.len()
            ),
        ));
    }
    for (k_minus_1, (group, &expected)) in w.iter().zip(counts).enumerate() {
        if group.len() != expected {
            return Err(Error::config(
                "weights",
                format!(
                    "k = {} needs {} pattern weights, got {}",
                    k_minus_1 + 1,
                    expected,
                    group.len()
                ),
            ));
        }
        if let Some(bad) = group.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::config(
                "weights",
                format!(
                    "k = {}: weight {bad} is not a non-negative number",
                    k_minus_1 + 1
                ),
            ));
        }
    }
    let sum: f64 = w.iter().flatten().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::config(
            "weights",
            format!("weights must sum to 1 (within {WEIGHT_SUM_TOL:e}), got {sum}"),
        ));
    }
    Ok(())
}

impl SystemConfig {
    /// Starts a configuration with `sigma_x2 = 1`, `delta2 = 0`, `sigma2 = 0`
    /// and uniform weights. The measurement count must be set.
    pub fn builder(n: usize, r: usize, k_max: usize) -> SystemConfigBuilder {
        SystemConfigBuilder {
            n,
            r,
            k_max,
            measurements: None,
            sigma2: 0.0,
            sigma_x2: 1.0,
            delta2: 0.0,
            weights: WeightSpec::Uniform,
        }
    }

    /// Builder pre-populated with this configuration, for deriving sweep points.
    pub fn to_builder(&self) -> SystemConfigBuilder {
        SystemConfigBuilder {
            n: self.n,
            r: self.r,
            k_max: self.k_max,
            measurements: Some(Measurements::Count(self.m)),
            sigma2: self.sigma2,
            sigma_x2: self.sigma_x2,
            delta2: self.delta2,
            weights: self.weight_spec(),
        }
    }

    pub fn weight_spec(&self) -> WeightSpec {
        if self.uniform_weights {
            WeightSpec::Uniform
        } else {
            WeightSpec::PerPattern(self.weights.clone())
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_len(&self) -> usize {
        self.q
    }

    pub fn blocks(&self) -> usize {
        self.r
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Realized undersampling ratio `N / M`.
    pub fn beta(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    pub fn has_uniform_weights(&self) -> bool {
        self.uniform_weights
    }

    pub fn weight(&self, index: ComponentIndex) -> f64 {
        self.weights[index.k - 1][index.l]
    }

    /// Probability of observing exactly `k` active blocks, for `k = 1..=K`.
    pub fn count_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|g| g.iter().sum()).collect()
    }

    /// Per-entry signal power `(k/R) sigma_x2 + ((R-k)/R) delta2` of a `k`-block component.
    pub fn component_power(&self, k: usize) -> f64 {
        component_power(k, self.r, self.sigma_x2, self.delta2)
    }

    /// Average per-entry power of the mixture.
    pub fn signal_power(&self) -> f64 {
        self.count_weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.component_power(i + 1))
            .sum()
    }

    /// All mixture components, ordered by `k` and then lexicographically by support.
    pub fn components(&self) -> Vec<MixtureComponent> {
        let mut out = Vec::new();
        for k in 1..=self.k_max {
            for (l, support) in (0..self.r).combinations(k).enumerate() {
                out.push(self.component_from_parts(ComponentIndex { k, l }, support));
            }
        }
        out
    }

    fn component_from_parts(&self, index: ComponentIndex, support: Vec<usize>) -> MixtureComponent {
        let mut cov_diag = vec![self.delta2; self.n];
        for &b in &support {
            cov_diag[b * self.q..(b + 1) * self.q].fill(self.sigma_x2);
        }
        MixtureComponent {
            index,
            support,
            cov_diag,
            weight: self.weight(index),
        }
    }
}

pub fn component_power(k: usize, r: usize, sigma_x2: f64, delta2: f64) -> f64 {
    let frac = k as f64 / r as f64;
    frac * sigma_x2 + (1.0 - frac) * delta2
}

/// One Gaussian term of the source mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub index: ComponentIndex,
    /// Active block indices, strictly increasing.
    pub support: Vec<usize>,
    /// Diagonal of the component covariance.
    pub cov_diag: Vec<f64>,
    pub weight: f64,
}

/// Binomial coefficient; saturates at `usize::MAX`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// All `k`-subsets of the blocks `0..r`, in lexicographic order. The position
/// of a subset in this list is its pattern index `l`.
pub fn enumerate_patterns(r: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > r {
        return Err(Error::invalid(format!(
            "need 1 <= k <= R, got k = {k}, R = {r}"
        )));
    }
    Ok((0..r).combinations(k).collect())
}

/// Lexicographic rank of a strictly increasing `k`-subset of `0..r`.
fn pattern_rank(r: usize, support: &[usize]) -> usize {
    let k = support.len();
    let mut rank = 0;
    let mut next = 0;
    for (i, &c) in support.iter().enumerate() {
        for skipped in next..c {
            rank += binomial(r - 1 - skipped, k - 1 - i);
        }
        next = c + 1;
    }
    rank
}

/// Builds the mixture component whose active blocks are `support`.
pub fn build_component(support: &[usize], config: &SystemConfig) -> Result<MixtureComponent> {
    if support.is_empty() {
        return Err(Error::invalid("support must contain at least one block"));
    }
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!(
            "support {support:?} repeats a block"
        )));
    }
    if let Some(&bad) = sorted.iter().find(|&&b| b >= config.r) {
        return Err(Error::invalid(format!(
            "block index {bad} out of range for R = {}",
            config.r
        )));
    }
    let k = sorted.len();
    if k > config.k_max {
        return Err(Error::invalid(format!(
            "support has {k} blocks but K = {}",
            config.k_max
        )));
    }
    let l = pattern_rank(config.r, &sorted);
    Ok(config.component_from_parts(ComponentIndex { k, l }, sorted))
}

/// Draws a mixture component according to the prior weights and then a
/// signal from that component. Returns the signal and the position of the
/// chosen component in `components`.
pub fn sample_source<R: Rng + ?Sized>(
    components: &[MixtureComponent],
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    if components.is_empty() {
        return Err(Error::invalid("no mixture components to sample from"));
    }
    let chooser = WeightedIndex::new(components.iter().map(|c| c.weight))
        .map_err(|e| Error::invalid(format!("mixture weights: {e}")))?;
    let which = chooser.sample(rng);
    let x = components[which]
        .cov_diag
        .iter()
        .map(|d| {
            let z: f64 = StandardNormal.sample(rng);
            d.sqrt() * z
        })
        .collect();
    Ok((x, which))
}

/// One realization of `y = A x + n`.
#[derive(Debug, Clone)]
pub struct MeasurementInstance {
    pub x: Vec<f64>,
    pub component: ComponentIndex,
    /// `M x N` matrix with IID `N(0, 1/M)` entries.
    pub a: Mat<f64>,
    pub noise: Vec<f64>,
    pub y: Vec<f64>,
}

/// Draws the measurement matrix and noise for a given signal.
pub fn sample_measurement<R: Rng + ?Sized>(
    x: Vec<f64>,
    component: ComponentIndex,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<MeasurementInstance> {
    if x.len() != config.n {
        return Err(Error::invalid(format!(
            "signal has length {}, expected N = {}",
            x.len(),
            config.n
        )));
    }
    let (m, n) = (config.m, config.n);
    let scale = (1.0 / m as f64).sqrt();
    // Column-major draw order.
    let entries: Vec<f64> = (0..m * n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    let a = Mat::from_fn(m, n, |i, j| entries[j * m + i]);

    let sigma = config.sigma2.sqrt();
    let noise: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect();

    let ax = &a * ColRef::from_slice(&x);
    let y = noise.iter().enumerate().map(|(i, e)| ax[i] + e).collect();
    Ok(MeasurementInstance {
        x,
        component,
        a,
        noise,
        y,
    })
}
