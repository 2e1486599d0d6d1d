//! Large-system MSE predictions.
//!
//! In the large-system limit the estimation problem decouples into scalar
//! Gaussian channels `z = x + xi * eta`, one per mixture component, whose
//! noise variance solves `xi2 = sigma2 + beta * mse_k(xi2)`. The MSE of the
//! MMSE estimator is the prior-weighted average of the channel MSEs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::source::{binomial, component_power, ComponentIndex, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Residual tolerance, relative to `max(1, xi2)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Picard damping factor in `(0, 1]`.
    pub damping: f64,
    /// Grid size of the root-bracketing sweep used to detect multiple solutions.
    pub scan_points: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-12,
            max_iter: 10_000,
            damping: 0.5,
            scan_points: 512,
        }
    }
}

/// Scalar MMSE of a `N(0, d)` variable observed in Gaussian noise of variance `xi2`.
fn scalar_mmse(d: f64, xi2: f64) -> f64 {
    if d == 0.0 || xi2 == 0.0 {
        0.0
    } else {
        d * xi2 / (d + xi2)
    }
}

/// Per-entry MSE of the equivalent AWGN channel for a `k`-block component.
pub fn awgn_component_mse(xi2: f64, k: usize, r: usize, sigma_x2: f64, delta2: f64) -> f64 {
    let frac = k as f64 / r as f64;
    frac * scalar_mmse(sigma_x2, xi2) + (1.0 - frac) * scalar_mmse(delta2, xi2)
}

/// The decoupled channel of one mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentChannel {
    pub k: usize,
    pub r: usize,
    pub sigma_x2: f64,
    pub delta2: f64,
}

impl ComponentChannel {
    pub fn mse(&self, xi2: f64) -> f64 {
        awgn_component_mse(xi2, self.k, self.r, self.sigma_x2, self.delta2)
    }

    pub fn power(&self) -> f64 {
        component_power(self.k, self.r, self.sigma_x2, self.delta2)
    }

    /// `sigma2 + beta * mse(xi2) - xi2`; zero at a solution.
    pub fn residual(&self, xi2: f64, beta: f64, sigma2: f64) -> f64 {
        sigma2 + beta * self.mse(xi2) - xi2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub xi2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// More than one solution exists in `[sigma2, sigma2 + beta * power]`;
    /// the largest one is returned.
    pub multiple_roots: bool,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) > 0 > f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `xi2 = sigma2 + beta * mse(xi2)` by damped Picard iteration started
/// at `sigma2 + beta * power`, then sweeps `[sigma2, start]` for further roots.
pub fn solve_fixed_point(
    channel: ComponentChannel,
    beta: f64,
    sigma2: f64,
    opts: &FixedPointOptions,
) -> Result<FixedPoint> {
    if channel.k == 0 || channel.k > channel.r {
        return Err(Error::invalid(format!(
            "need 1 <= k <= R, got k = {}, R = {}",
            channel.k, channel.r
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) || !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::invalid(format!(
            "beta and sigma2 must be finite and >= 0, got {beta}, {sigma2}"
        )));
    }
    let tol_ok = opts.tol.is_finite() && opts.tol > 0.0;
    let damping_ok = opts.damping > 0.0 && opts.damping <= 1.0;
    if !tol_ok || !damping_ok || opts.scan_points < 2 {
        return Err(Error::invalid("invalid fixed-point options"));
    }
    if beta == 0.0 {
        return Ok(FixedPoint {
            xi2: sigma2,
            iterations: 0,
            converged: true,
            multiple_roots: false,
        });
    }

    let h = |xi2: f64| channel.residual(xi2, beta, sigma2);
    let accept = |xi2: f64| h(xi2).abs() <= opts.tol * xi2.max(1.0);

    let start = sigma2 + beta * channel.power();
    let mut xi2 = start;
    let mut iterations = 0;
    let mut picard_ok = false;
    while iterations < opts.max_iter {
        if accept(xi2) {
            picard_ok = true;
            break;
        }
        let mapped = sigma2 + beta * channel.mse(xi2);
        xi2 = (1.0 - opts.damping) * xi2 + opts.damping * mapped;
        iterations += 1;
    }
    picard_ok |= accept(xi2);

    // Root sweep. h(sigma2) >= 0 and h(start) <= 0, so at least one root lies
    // in the interval.
    let n = opts.scan_points;
    let step = (start - sigma2) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 == n {
                start
            } else {
                sigma2 + i as f64 * step
            }
        })
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&g| h(g)).collect();
    let mut roots = Vec::new();
    for i in 0..n {
        if vals[i] == 0.0 {
            roots.push(grid[i]);
        } else if i + 1 < n && vals[i] > 0.0 && vals[i + 1] < 0.0 {
            roots.push(bisect(grid[i], grid[i + 1], h));
        } else if i + 1 < n && vals[i] < 0.0 && vals[i + 1] > 0.0 {
            roots.push(bisect(grid[i + 1], grid[i], |x| -h(x)));
        }
    }
    let multiple_roots = roots.len() > 1;
    if let Some(&largest) = roots.iter().max_by(|a, b| a.total_cmp(b)) {
        let far = (largest - xi2).abs() > 1e-9 * largest.max(1.0);
        if !picard_ok || (multiple_roots && far && largest > xi2) {
            xi2 = largest;
        }
    }

    Ok(FixedPoint {
        xi2,
        iterations,
        converged: accept(xi2),
        multiple_roots,
    })
}

/// Closed-form equivalent noise variance for strictly block-sparse sources
/// with unit active variance, at effective load `beta_k = (k / R) beta`.
pub fn closed_form_xi(k: usize, r: usize, beta: f64, sigma2: f64) -> f64 {
    tse_hanly_reference(k as f64 / r as f64 * beta, sigma2)
}

/// Tse-Hanly effective noise variance of a large random linear system with
/// load `beta_eff`: the positive root of `t^2 + t (1 - beta_eff - sigma2) - sigma2 = 0`.
pub fn tse_hanly_reference(beta_eff: f64, sigma2: f64) -> f64 {
    if beta_eff == 0.0 {
        return sigma2;
    }
    let b = beta_eff + sigma2 - 1.0;
    let disc = (4.0 * sigma2 + b * b).sqrt();
    if b >= 0.0 {
        0.5 * (b + disc)
    } else {
        // same root, without cancellation
        2.0 * sigma2 / (disc - b)
    }
}

/// Relative residual of `t^2 + t (1 - beta_eff - sigma2) - sigma2` at `t`.
pub fn tse_hanly_residual(t: f64, beta_eff: f64, sigma2: f64) -> f64 {
    let lin = t * (1.0 - beta_eff - sigma2);
    let res = t * t + lin - sigma2;
    let scale = t * t + lin.abs() + sigma2;
    if scale == 0.0 {
        0.0
    } else {
        res.abs() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentSolution {
    pub index: ComponentIndex,
    pub xi2: f64,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub multiple_roots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSolution {
    pub components: Vec<ComponentSolution>,
    pub total_mse: f64,
    pub converged: bool,
    pub multiple_roots: bool,
}

impl ReplicaSolution {
    pub fn component(&self, index: ComponentIndex) -> Option<&ComponentSolution> {
        self.components.iter().find(|c| c.index == index)
    }
}

/// Predicted large-system MSE of the MMSE estimator for `config`.
///
/// Strictly sparse sources (`delta2 = 0`) use the closed form, rescaled for
/// `sigma_x2 != 1`; otherwise every component's fixed point is solved.
pub fn theoretical_mmse(
    config: &SystemConfig,
    opts: &FixedPointOptions,
) -> Result<ReplicaSolution> {
    let (r, beta, sigma2) = (config.blocks(), config.beta(), config.sigma2());
    let (sigma_x2, delta2) = (config.sigma_x2(), config.delta2());

    let mut components = Vec::new();
    for k in 1..=config.k_max() {
        let channel = ComponentChannel {
            k,
            r,
            sigma_x2,
            delta2,
        };
        for l in 0..binomial(r, k) {
            let fp = if delta2 == 0.0 {
                let beta_k = k as f64 / r as f64 * beta;
                FixedPoint {
                    xi2: sigma_x2 * tse_hanly_reference(beta_k, sigma2 / sigma_x2),
                    iterations: 0,
                    converged: true,
                    multiple_roots: sigma2 == 0.0 && beta_k > 1.0,
                }
            } else {
                solve_fixed_point(channel, beta, sigma2, opts)?
            };
            components.push(ComponentSolution {
                index: ComponentIndex { k, l },
                xi2: fp.xi2,
                mse: channel.mse(fp.xi2),
                iterations: fp.iterations,
                converged: fp.converged,
                multiple_roots: fp.multiple_roots,
            });
        }
    }

    let total_mse = components
        .iter()
        .map(|c| config.weight(c.index) * c.mse)
        .sum();
    Ok(ReplicaSolution {
        total_mse,
        converged: components.iter().all(|c| c.converged),
        multiple_roots: components.iter().any(|c| c.multiple_roots),
        components,
    })
}
