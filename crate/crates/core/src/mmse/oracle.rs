//! Brute-force posterior mean by tensor-grid trapezoidal quadrature.
//!
//! Only usable for signals of at most three entries. It evaluates the joint
//! density `p(y | A, x) p(x)` pointwise and never touches the closed-form
//! evidence or Wiener machinery, so it serves as an independent check of
//! [`super::mmse_estimate`]. Zero-variance coordinates of a component are
//! point masses at the origin and are held fixed rather than integrated.

use std::cmp::Ordering;

use faer::MatRef;

use crate::error::{Error, Result};
use crate::source::MixtureComponent;

pub const MAX_ORACLE_DIMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// One axis per signal coordinate.
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    /// Same symmetric range `[-half_width, half_width]` on every axis.
    pub fn symmetric(dims: usize, half_width: f64, points: usize) -> Self {
        GridSpec {
            axes: vec![
                GridAxis {
                    min: -half_width,
                    max: half_width,
                    points,
                };
                dims
            ],
        }
    }
}

impl GridAxis {
    fn nodes(&self) -> Vec<(f64, f64)> {
        let h = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let w = if i == 0 || i + 1 == self.points {
                    0.5 * h
                } else {
                    h
                };
                (self.min + i as f64 * h, w)
            })
            .collect()
    }
}

/// `E[x | y, A]` by quadrature over `grid`.
pub fn oracle_posterior_mean(
    y: &[f64],
    a: MatRef<'_, f64>,
    components: &[MixtureComponent],
    sigma2: f64,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    let (m, n) = (a.nrows(), a.ncols());
    if n > MAX_ORACLE_DIMS {
        return Err(Error::UnsupportedSize(n));
    }
    if y.len() != m {
        return Err(Error::invalid("y length does not match A"));
    }
    if components.is_empty() {
        return Err(Error::invalid("no mixture components"));
    }
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::invalid("quadrature oracle needs sigma2 > 0"));
    }
    if grid.axes.len() != n
        || grid
            .axes
            .iter()
            .any(|ax| ax.points < 2 || ax.max.partial_cmp(&ax.min) != Some(Ordering::Greater))
    {
        return Err(Error::invalid(
            "grid needs one axis with >= 2 points per coordinate",
        ));
    }
    if components.iter().any(|c| c.cov_diag.len() != n) {
        return Err(Error::invalid("component dimension does not match A"));
    }

    let nodes: Vec<Vec<(f64, f64)>> = grid.axes.iter().map(GridAxis::nodes).collect();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    // log of w * p(x_free) * p(y | A, x) at every quadrature node, with the
    // node's coordinates and trapezoid weight
    let mut samples: Vec<(f64, [f64; MAX_ORACLE_DIMS], f64)> = Vec::new();
    for c in components.iter().filter(|c| c.weight > 0.0) {
        let free: Vec<usize> = (0..n).filter(|&i| c.cov_diag[i] > 0.0).collect();
        let sizes: Vec<usize> = free.iter().map(|&i| nodes[i].len()).collect();
        let total: usize = sizes.iter().product();
        let mut counter = vec![0usize; free.len()];
        for _ in 0..total {
            let mut x = [0.0; MAX_ORACLE_DIMS];
            let mut quad_w = 1.0;
            let mut log_p = c.weight.ln();
            for (slot, &i) in free.iter().enumerate() {
                let (xi, wi) = nodes[i][counter[slot]];
                x[i] = xi;
                quad_w *= wi;
                let d = c.cov_diag[i];
                log_p += -0.5 * (ln_2pi + d.ln() + xi * xi / d);
            }
            for (row, yr) in y.iter().enumerate() {
                let mean: f64 = (0..n).map(|j| a[(row, j)] * x[j]).sum();
                let r = yr - mean;
                log_p += -0.5 * (ln_2pi + sigma2.ln() + r * r / sigma2);
            }
            samples.push((log_p, x, quad_w));

            for slot in 0..counter.len() {
                counter[slot] += 1;
                if counter[slot] < sizes[slot] {
                    break;
                }
                counter[slot] = 0;
            }
        }
    }

    let shift = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    let mut numer = [0.0; MAX_ORACLE_DIMS];
    for (log_p, x, w) in &samples {
        let v = w * (log_p - shift).exp();
        denom += v;
        for j in 0..n {
            numer[j] += v * x[j];
        }
    }
    Ok(numer[..n].iter().map(|v| v / denom).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmse::{mmse_estimate, wiener_estimate};
    use crate::source::{ComponentIndex, SystemConfig};
    use faer::Mat;

    fn gaussian(cov: &[f64]) -> MixtureComponent {
        MixtureComponent {
            index: ComponentIndex { k: 1, l: 0 },
            support: vec![0],
            cov_diag: cov.to_vec(),
            weight: 1.0,
        }
    }

    #[test]
    fn rejects_large_signals() {
        let a = Mat::<f64>::zeros(1, 4);
        let err = oracle_posterior_mean(
            &[0.0],
            a.as_ref(),
            &[gaussian(&[1.0; 4])],
            1.0,
            &GridSpec::symmetric(4, 5.0, 11),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnsupportedSize(4)));
    }

    #[test]
    fn uninformative_likelihood_returns_prior_mean() {
        let a = Mat::from_fn(1, 2, |_, j| [0.8, -0.4][j]);
        let est = oracle_posterior_mean(
            &[1.5],
            a.as_ref(),
            &[gaussian(&[1.0, 1.0])],
            1e6,
            &GridSpec::symmetric(2, 8.0, 161),
        )
        .unwrap();
        assert!(est.iter().all(|v| v.abs() < 1e-5), "{est:?}");
    }

    #[test]
    fn single_gaussian_matches_wiener() {
        let a = Mat::from_fn(2, 3, |i, j| [[0.9, -0.3, 0.5], [0.2, 1.1, -0.7]][i][j]);
        let y = [0.6, -1.0];
        let cov = [1.0, 0.5, 0.8];
        let est = oracle_posterior_mean(
            &y,
            a.as_ref(),
            &[gaussian(&cov)],
            0.3,
            &GridSpec::symmetric(3, 7.0, 121),
        )
        .unwrap();
        let w = wiener_estimate(&y, a.as_ref(), &cov, 0.3).unwrap();
        for (o, e) in est.iter().zip(&w) {
            assert!((o - e).abs() < 1e-5, "{est:?} vs {w:?}");
        }
    }

    #[test]
    fn refinement_converges_to_closed_form() {
        let cfg = SystemConfig::builder(2, 2, 1)
            .measurements(1)
            .sigma2(0.5)
            .build()
            .unwrap();
        let comps = cfg.components();
        let a = Mat::from_fn(1, 2, |_, j| [1.3, -0.6][j]);
        let y = [0.9];
        let exact = mmse_estimate(&y, a.as_ref(), &comps, 0.5).unwrap().estimate;
        let errs: Vec<f64> = [6, 11, 21, 41]
            .iter()
            .map(|&p| {
                let est = oracle_posterior_mean(
                    &y,
                    a.as_ref(),
                    &comps,
                    0.5,
                    &GridSpec::symmetric(2, 6.0, p),
                )
                .unwrap();
                est.iter()
                    .zip(&exact)
                    .map(|(o, e)| (o - e).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] || w[1] < 1e-12, "{errs:?}");
        }
        assert!(errs[3] < 1e-6, "{errs:?}");
    }
}
