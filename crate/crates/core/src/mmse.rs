//! Posterior-mean (MMSE) estimation under the block-sparse Gaussian mixture.
//!
//! Conditioned on component `(k, l)` the measurements are zero-mean Gaussian
//! with covariance `S = A D A^T + sigma2 I`, and the conditional mean of the
//! signal is the Wiener estimate `D A^T S^{-1} y`. The MMSE estimate mixes the
//! per-component Wiener estimates with the posterior component probabilities.
//!
//! Two evaluation routes are provided. The direct route factors the `M x M`
//! covariance of every component. The two-level route applies when every
//! covariance diagonal takes only the values `low` and `high` (the block
//! sparse source always does): it factors `B = sigma2 I + low A A^T` once per
//! measurement and then only needs a `|S| x |S|` factorization per component,
//! where `S` is the set of high-variance coordinates.

pub mod oracle;

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Llt;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, MatRef, Par, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::source::{ComponentIndex, MixtureComponent};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative size of the diagonal loading used when a factorization fails.
pub const JITTER_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentEvidence {
    pub component: ComponentIndex,
    /// `log p(y | A, component)`.
    pub log_evidence: f64,
    pub posterior_weight: f64,
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub estimate: Vec<f64>,
    pub evidences: Vec<ComponentEvidence>,
    pub map_component: ComponentIndex,
    /// Wiener estimate of every component, in the order of `evidences`.
    pub component_estimates: Vec<Vec<f64>>,
    /// True if any factorization needed the jitter retry.
    pub jittered: bool,
}

impl EstimateReport {
    pub fn component_estimate(&self, index: ComponentIndex) -> Option<&[f64]> {
        self.evidences
            .iter()
            .position(|e| e.component == index)
            .map(|i| self.component_estimates[i].as_slice())
    }
}

/// Selects how [`mmse_estimate_with_route`] evaluates the components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Two-level factorization when the covariances allow it, direct otherwise.
    Auto,
    /// One `M x M` factorization per component.
    Direct,
}

/// Log-evidence and Wiener estimate of one component, sharing one factorization.
#[derive(Debug, Clone)]
pub(crate) struct ComponentFit {
    pub log_evidence: f64,
    pub estimate: Vec<f64>,
    pub jittered: bool,
}

fn check_dims(y: &[f64], a: MatRef<'_, f64>, cov_diag: &[f64]) -> Result<()> {
    if y.len() != a.nrows() {
        return Err(Error::invalid(format!(
            "y has length {} but A has {} rows",
            y.len(),
            a.nrows()
        )));
    }
    if cov_diag.len() != a.ncols() {
        return Err(Error::invalid(format!(
            "covariance diagonal has length {} but A has {} columns",
            cov_diag.len(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Cholesky factorization with a single diagonal-loading retry.
fn factor_with_jitter(mut s: Mat<f64>) -> Result<(Llt<f64>, bool)> {
    if let Ok(llt) = s.llt(Side::Lower) {
        return Ok((llt, false));
    }
    let dim = s.nrows();
    let trace: f64 = (0..dim).map(|i| s[(i, i)]).sum();
    let jitter = JITTER_SCALE * trace.abs() / dim.max(1) as f64;
    for i in 0..dim {
        s[(i, i)] += jitter;
    }
    match s.llt(Side::Lower) {
        Ok(llt) => Ok((llt, true)),
        Err(_) => Err(Error::NotPositiveDefinite { component: None }),
    }
}

fn log_det(llt: &Llt<f64>) -> f64 {
    let l = llt.L();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Factors `A diag(cov_diag) A^T + sigma2 I`.
fn factor_measurement_covariance(
    a: MatRef<'_, f64>,
    cov_diag: &[f64],
    sigma2: f64,
) -> Result<(Llt<f64>, bool)> {
    let m = a.nrows();
    let active: Vec<usize> = (0..a.ncols()).filter(|&j| cov_diag[j] != 0.0).collect();
    let scaled = Mat::from_fn(m, active.len(), |i, c| {
        let j = active[c];
        a[(i, j)] * cov_diag[j].sqrt()
    });
    let mut s = Mat::<f64>::zeros(m, m);
    matmul(
        s.as_mut(),
        Accum::Replace,
        scaled.as_ref(),
        scaled.transpose(),
        1.0,
        Par::Seq,
    );
    for i in 0..m {
        s[(i, i)] += sigma2;
    }
    factor_with_jitter(s)
}

fn fit_direct(
    y: &[f64],
    a: MatRef<'_, f64>,
    cov_diag: &[f64],
    sigma2: f64,
) -> Result<ComponentFit> {
    check_dims(y, a, cov_diag)?;
    let (llt, jittered) = factor_measurement_covariance(a, cov_diag, sigma2)?;
    let m = a.nrows();

    let mut z = column(y);
    solve_lower_triangular_in_place(llt.L(), z.as_mut(), Par::Seq);
    let quad: f64 = (0..m).map(|i| z[(i, 0)] * z[(i, 0)]).sum();
    let log_evidence = -0.5 * (m as f64 * LN_2PI + log_det(&llt) + quad);

    // S^{-1} y = L^{-T} z
    let mut v = z;
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(
        llt.L().transpose(),
        v.as_mut(),
        Par::Seq,
    );
    let mut g = Mat::<f64>::zeros(a.ncols(), 1);
    matmul(
        g.as_mut(),
        Accum::Replace,
        a.transpose(),
        v.as_ref(),
        1.0,
        Par::Seq,
    );
    let estimate = cov_diag
        .iter()
        .enumerate()
        .map(|(j, d)| d * g[(j, 0)])
        .collect();
    Ok(ComponentFit {
        log_evidence,
        estimate,
        jittered,
    })
}

/// `log N(y | 0, A diag(cov_diag) A^T + sigma2 I)`.
pub fn component_log_evidence(
    y: &[f64],
    a: MatRef<'_, f64>,
    cov_diag: &[f64],
    sigma2: f64,
) -> Result<f64> {
    fit_direct(y, a, cov_diag, sigma2).map(|f| f.log_evidence)
}

/// Linear MMSE estimate `D A^T (A D A^T + sigma2 I)^{-1} y` for a zero-mean
/// Gaussian prior with diagonal covariance `D`.
pub fn wiener_estimate(
    y: &[f64],
    a: MatRef<'_, f64>,
    cov_diag: &[f64],
    sigma2: f64,
) -> Result<Vec<f64>> {
    fit_direct(y, a, cov_diag, sigma2).map(|f| f.estimate)
}

/// Normalized posterior component probabilities `w_i p_i / sum_j w_j p_j`,
/// evaluated in the log domain. Components with zero prior get zero weight.
pub fn posterior_weights(log_evidences: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    if log_evidences.len() != priors.len() {
        return Err(Error::invalid(format!(
            "{} log-evidences but {} priors",
            log_evidences.len(),
            priors.len()
        )));
    }
    if let Some(p) = priors.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::invalid(format!(
            "prior weight {p} is not a non-negative number"
        )));
    }
    if log_evidences
        .iter()
        .any(|l| l.is_nan() || *l == f64::INFINITY)
    {
        return Err(Error::invalid("log-evidence is NaN or +inf"));
    }
    let terms: Vec<f64> = log_evidences
        .iter()
        .zip(priors)
        .map(|(l, p)| {
            if *p > 0.0 {
                p.ln() + l
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::invalid(
            "all prior weights are zero or all evidences vanish",
        ));
    }
    let unnorm: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|u| u / total).collect())
}

/// Shared per-measurement quantities for covariances of the form
/// `diag(low) + (high - low) * P_S`.
struct TwoLevelFactor {
    low: f64,
    high: f64,
    m: usize,
    /// `A^T B^{-1} A`
    gram: Mat<f64>,
    /// `A^T B^{-1} y`
    projected: Vec<f64>,
    log_det_b: f64,
    /// `y^T B^{-1} y`
    quad_b: f64,
    jittered: bool,
}

impl TwoLevelFactor {
    fn new(y: &[f64], a: MatRef<'_, f64>, low: f64, high: f64, sigma2: f64) -> Result<Self> {
        let (m, n) = (a.nrows(), a.ncols());
        if y.len() != m {
            return Err(Error::invalid(format!(
                "y has length {} but A has {m} rows",
                y.len()
            )));
        }
        let mut gram = Mat::<f64>::zeros(n, n);
        let mut proj = Mat::<f64>::zeros(n, 1);
        let (log_det_b, quad_b, jittered);

        if low == 0.0 && sigma2 > 0.0 {
            let inv = 1.0 / sigma2;
            matmul(
                gram.as_mut(),
                Accum::Replace,
                a.transpose(),
                a,
                inv,
                Par::Seq,
            );
            matmul(
                proj.as_mut(),
                Accum::Replace,
                a.transpose(),
                column(y).as_ref(),
                inv,
                Par::Seq,
            );
            log_det_b = m as f64 * sigma2.ln();
            quad_b = y.iter().map(|v| v * v).sum::<f64>() * inv;
            jittered = false;
        } else {
            let mut b = Mat::<f64>::zeros(m, m);
            matmul(b.as_mut(), Accum::Replace, a, a.transpose(), low, Par::Seq);
            for i in 0..m {
                b[(i, i)] += sigma2;
            }
            let (llt, jit) = factor_with_jitter(b)?;
            let mut w = a.to_owned();
            solve_lower_triangular_in_place(llt.L(), w.as_mut(), Par::Seq);
            let mut z = column(y);
            solve_lower_triangular_in_place(llt.L(), z.as_mut(), Par::Seq);
            matmul(
                gram.as_mut(),
                Accum::Replace,
                w.transpose(),
                w.as_ref(),
                1.0,
                Par::Seq,
            );
            matmul(
                proj.as_mut(),
                Accum::Replace,
                w.transpose(),
                z.as_ref(),
                1.0,
                Par::Seq,
            );
            log_det_b = log_det(&llt);
            quad_b = (0..m).map(|i| z[(i, 0)] * z[(i, 0)]).sum();
            jittered = jit;
        }

        Ok(TwoLevelFactor {
            low,
            high,
            m,
            gram,
            projected: (0..n).map(|j| proj[(j, 0)]).collect(),
            log_det_b,
            quad_b,
            jittered,
        })
    }

    /// Woodbury update for one component with high-variance coordinates `active`.
    fn fit(&self, active: &[usize]) -> Result<ComponentFit> {
        let n = self.projected.len();
        let s = active.len();
        let c = self.high - self.low;

        let mut g = self.projected.clone();
        let mut total_log_det = self.log_det_b;
        let mut quad = self.quad_b;
        let mut jittered = self.jittered;

        if s > 0 {
            let h = Mat::from_fn(s, s, |i, j| {
                let v = c * self.gram[(active[i], active[j])];
                if i == j {
                    1.0 + v
                } else {
                    v
                }
            });
            let (llt, jit) = factor_with_jitter(h)?;
            jittered |= jit;
            let rhs: Vec<f64> = active.iter().map(|&j| self.projected[j]).collect();
            let mut u = column(&rhs);
            solve_lower_triangular_in_place(llt.L(), u.as_mut(), Par::Seq);
            let half_quad: f64 = (0..s).map(|i| u[(i, 0)] * u[(i, 0)]).sum();
            faer::linalg::triangular_solve::solve_upper_triangular_in_place(
                llt.L().transpose(),
                u.as_mut(),
                Par::Seq,
            );
            quad -= c * half_quad;
            total_log_det += log_det(&llt);
            for (col, &j) in active.iter().enumerate() {
                let coef = c * u[(col, 0)];
                let gj = self.gram.col(j);
                for (gi, gv) in g.iter_mut().zip(gj.iter()) {
                    *gi -= coef * gv;
                }
            }
        }

        let mut estimate: Vec<f64> = g.iter().map(|v| self.low * v).collect();
        for &j in active {
            estimate[j] = self.high * g[j];
        }
        debug_assert_eq!(estimate.len(), n);
        Ok(ComponentFit {
            log_evidence: -0.5 * (self.m as f64 * LN_2PI + total_log_det + quad),
            estimate,
            jittered,
        })
    }
}

/// `Some((low, high))` when every covariance diagonal uses only those two values.
fn two_level_values(components: &[MixtureComponent]) -> Option<(f64, f64)> {
    let all = components.iter().flat_map(|c| c.cov_diag.iter().copied());
    let low = all.clone().fold(f64::INFINITY, f64::min);
    let high = all.clone().fold(f64::NEG_INFINITY, f64::max);
    if !(low.is_finite() && high.is_finite() && low >= 0.0) {
        return None;
    }
    all.clone()
        .all(|d| d == low || d == high)
        .then_some((low, high))
}

/// Exact MMSE estimate `E[x | y, A]` for the mixture `components`.
pub fn mmse_estimate(
    y: &[f64],
    a: MatRef<'_, f64>,
    components: &[MixtureComponent],
    sigma2: f64,
) -> Result<EstimateReport> {
    mmse_estimate_with_route(y, a, components, sigma2, Route::Auto)
}

pub fn mmse_estimate_with_route(
    y: &[f64],
    a: MatRef<'_, f64>,
    components: &[MixtureComponent],
    sigma2: f64,
    route: Route,
) -> Result<EstimateReport> {
    if components.is_empty() {
        return Err(Error::invalid("no mixture components"));
    }
    for c in components {
        check_dims(y, a, &c.cov_diag)?;
    }

    let two_level = match route {
        Route::Direct => None,
        Route::Auto => two_level_values(components)
            .and_then(|(low, high)| TwoLevelFactor::new(y, a, low, high, sigma2).ok()),
    };

    let fits = components
        .iter()
        .map(|c| {
            let fit = match &two_level {
                Some(f) => {
                    let active: Vec<usize> = (0..c.cov_diag.len())
                        .filter(|&j| c.cov_diag[j] == f.high && f.high != f.low)
                        .collect();
                    f.fit(&active)
                }
                None => fit_direct(y, a, &c.cov_diag, sigma2),
            };
            fit.map_err(|e| e.at_component(c.index))
        })
        .collect::<Result<Vec<_>>>()?;

    assemble(components, fits)
}

fn assemble(components: &[MixtureComponent], fits: Vec<ComponentFit>) -> Result<EstimateReport> {
    let log_ev: Vec<f64> = fits.iter().map(|f| f.log_evidence).collect();
    let priors: Vec<f64> = components.iter().map(|c| c.weight).collect();
    let weights = posterior_weights(&log_ev, &priors)?;

    let n = fits[0].estimate.len();
    let mut estimate = vec![0.0; n];
    for (w, f) in weights.iter().zip(&fits) {
        if *w == 0.0 {
            continue;
        }
        for (e, v) in estimate.iter_mut().zip(&f.estimate) {
            *e += w * v;
        }
    }

    let map = weights
        .iter()
        .enumerate()
        .fold(0, |best, (i, w)| if *w > weights[best] { i } else { best });

    let evidences = components
        .iter()
        .zip(&log_ev)
        .zip(&weights)
        .map(
            |((c, &log_evidence), &posterior_weight)| ComponentEvidence {
                component: c.index,
                log_evidence,
                posterior_weight,
            },
        )
        .collect();

    Ok(EstimateReport {
        estimate,
        evidences,
        map_component: components[map].index,
        jittered: fits.iter().any(|f| f.jittered),
        component_estimates: fits.into_iter().map(|f| f.estimate).collect(),
    })
}

/// Conditional MMSE estimate for an estimator told the true component.
pub fn genie_estimate(
    y: &[f64],
    a: MatRef<'_, f64>,
    true_component: &MixtureComponent,
    sigma2: f64,
) -> Result<Vec<f64>> {
    wiener_estimate(y, a, &true_component.cov_diag, sigma2)
        .map_err(|e| e.at_component(true_component.index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{sample_measurement, sample_source, SystemConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
        Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn standard_normal_evidence_at_zero() {
        let a = mat(1, 1, &[1.0]);
        let le = component_log_evidence(&[0.0], a.as_ref(), &[0.0], 1.0).unwrap();
        assert!((le + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn evidence_matches_explicit_2x2_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        for _ in 0..10 {
            let a_data: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = mat(2, 3, &a_data);
            let d = [rng.random_range(0.0..2.0), 0.0, rng.random_range(0.0..2.0)];
            let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let s2 = rng.random_range(0.05..1.0);
            // explicit S = A D A^T + s2 I
            let mut s = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] = (0..3).map(|t| a[(i, t)] * d[t] * a[(j, t)]).sum::<f64>();
                }
                s[i][i] += s2;
            }
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let inv = [
                [s[1][1] / det, -s[0][1] / det],
                [-s[1][0] / det, s[0][0] / det],
            ];
            let q = y[0] * (inv[0][0] * y[0] + inv[0][1] * y[1])
                + y[1] * (inv[1][0] * y[0] + inv[1][1] * y[1]);
            let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q;
            let got = component_log_evidence(&y, a.as_ref(), &d, s2).unwrap();
            assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        }
    }

    #[test]
    fn more_noise_lowers_density_at_origin() {
        let a = mat(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let d = [1.0, 0.2];
        let base = component_log_evidence(&[0.0, 0.0], a.as_ref(), &d, 0.1).unwrap();
        let more = component_log_evidence(&[0.0, 0.0], a.as_ref(), &d, 0.6).unwrap();
        assert!(more < base);
    }

    #[test]
    fn wiener_special_cases() {
        let a = mat(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let zero = wiener_estimate(&[1.0, -2.0], a.as_ref(), &[0.0; 3], 0.5).unwrap();
        assert_eq!(zero, vec![0.0; 3]);

        let a = mat(1, 1, &[2.0]);
        let est = wiener_estimate(&[1.0], a.as_ref(), &[1.0], 1.0).unwrap();
        assert!((est[0] - 0.4).abs() < 1e-15);

        let eye = Mat::<f64>::identity(3, 3);
        let y = [0.3, -1.2, 4.0];
        let est = wiener_estimate(&y, eye.as_ref(), &[1.0; 3], 1.0).unwrap();
        assert!(max_abs_diff(&est, &[0.15, -0.6, 2.0]) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(wiener_estimate(&[1.0], a.as_ref(), &[1.0, 1.0], 1.0).is_err());
        assert!(wiener_estimate(&[1.0, 1.0], a.as_ref(), &[1.0], 1.0).is_err());
    }

    #[test]
    fn singular_covariance_uses_jitter() {
        // rank-2 covariance in 3 dimensions without noise
        let a = mat(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let fit = fit_direct(&[1.0, 2.0, 3.0], a.as_ref(), &[1.0, 1.0], 0.0).unwrap();
        assert!(fit.jittered);
        let fit = fit_direct(&[1.0, 2.0, 3.0], a.as_ref(), &[1.0, 1.0], 0.1).unwrap();
        assert!(!fit.jittered);
        // all-zero covariance without noise cannot be rescued
        let err = fit_direct(&[1.0, 2.0, 3.0], a.as_ref(), &[0.0, 0.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn posterior_weight_cases() {
        let w = posterior_weights(&[-3.0, -3.0, -3.0], &[0.2, 0.3, 0.5]).unwrap();
        assert!(max_abs_diff(&w, &[0.2, 0.3, 0.5]) < 1e-15);
        assert_eq!(posterior_weights(&[12.0], &[1.0]).unwrap(), vec![1.0]);
        let w = posterior_weights(&[0.0, -1e6], &[0.5, 0.5]).unwrap();
        assert_eq!(w[0], 1.0);
        assert!(w[1].is_finite() && w[1] >= 0.0 && w[1] < 1e-300);
        let w = posterior_weights(&[1e6, -1e6], &[0.5, 0.5]).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        let w = posterior_weights(&[0.0, 5.0], &[1.0, 0.0]).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        assert!(posterior_weights(&[0.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(posterior_weights(&[0.0], &[0.5, 0.5]).is_err());
        assert!(posterior_weights(&[f64::NAN], &[1.0]).is_err());
    }

    fn instance(
        cfg: &SystemConfig,
        seed: u64,
    ) -> (Vec<MixtureComponent>, crate::source::MeasurementInstance) {
        let comps = cfg.components();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, which) = sample_source(&comps, &mut rng).unwrap();
        let inst = sample_measurement(x, comps[which].index, cfg, &mut rng).unwrap();
        (comps, inst)
    }

    #[test]
    fn single_component_mixture_is_wiener() {
        let cfg = SystemConfig::builder(12, 3, 3)
            .measurements(5)
            .sigma2(0.2)
            .weights(crate::source::WeightSpec::PerPattern(vec![
                vec![0.0; 3],
                vec![0.0; 3],
                vec![1.0],
            ]))
            .build()
            .unwrap();
        let (comps, inst) = instance(&cfg, 4);
        let full = &comps[6];
        let rep = mmse_estimate(&inst.y, inst.a.as_ref(), std::slice::from_ref(full), 0.2).unwrap();
        let w = wiener_estimate(&inst.y, inst.a.as_ref(), &full.cov_diag, 0.2).unwrap();
        assert!(max_abs_diff(&rep.estimate, &w) < 1e-12);
        let g = genie_estimate(&inst.y, inst.a.as_ref(), full, 0.2).unwrap();
        assert!(max_abs_diff(&rep.estimate, &g) < 1e-12);
    }

    #[test]
    fn two_level_route_matches_direct_route() {
        for (delta2, sigma2) in [(0.0, 0.3), (1e-3, 0.05), (1e-6, 0.01), (0.2, 1.0)] {
            let cfg = SystemConfig::builder(24, 6, 2)
                .measurements(10)
                .sigma2(sigma2)
                .delta2(delta2)
                .build()
                .unwrap();
            for seed in 0..4 {
                let (comps, inst) = instance(&cfg, seed);
                let fast = mmse_estimate(&inst.y, inst.a.as_ref(), &comps, sigma2).unwrap();
                let slow = mmse_estimate_with_route(
                    &inst.y,
                    inst.a.as_ref(),
                    &comps,
                    sigma2,
                    Route::Direct,
                )
                .unwrap();
                for (f, s) in fast.evidences.iter().zip(&slow.evidences) {
                    assert!(
                        (f.log_evidence - s.log_evidence).abs()
                            < 1e-8 * (1.0 + s.log_evidence.abs()),
                        "delta2={delta2}: {} vs {}",
                        f.log_evidence,
                        s.log_evidence
                    );
                }
                for (f, s) in fast
                    .component_estimates
                    .iter()
                    .zip(&slow.component_estimates)
                {
                    assert!(max_abs_diff(f, s) < 1e-8);
                }
                assert!(max_abs_diff(&fast.estimate, &slow.estimate) < 1e-8);
            }
        }
    }

    #[test]
    fn estimate_is_a_convex_combination() {
        let cfg = SystemConfig::builder(16, 4, 2)
            .measurements(6)
            .sigma2(0.5)
            .delta2(1e-4)
            .build()
            .unwrap();
        for seed in 0..5 {
            let (comps, inst) = instance(&cfg, seed);
            let rep = mmse_estimate(&inst.y, inst.a.as_ref(), &comps, 0.5).unwrap();
            let total: f64 = rep.evidences.iter().map(|e| e.posterior_weight).sum();
            assert!((total - 1.0).abs() < 1e-10);
            for j in 0..16 {
                let vals = rep.component_estimates.iter().map(|e| e[j]);
                let lo = vals.clone().fold(f64::INFINITY, f64::min);
                let hi = vals.fold(f64::NEG_INFINITY, f64::max);
                assert!(rep.estimate[j] >= lo - 1e-12 && rep.estimate[j] <= hi + 1e-12);
                let sum: f64 = rep
                    .evidences
                    .iter()
                    .zip(&rep.component_estimates)
                    .map(|(e, c)| e.posterior_weight * c[j])
                    .sum();
                assert!((sum - rep.estimate[j]).abs() < 1e-10);
            }
            let best = rep
                .evidences
                .iter()
                .max_by(|a, b| a.posterior_weight.total_cmp(&b.posterior_weight))
                .unwrap();
            assert_eq!(best.component, rep.map_component);
        }
    }

    #[test]
    fn genie_zeroes_inactive_blocks_under_strict_sparsity() {
        let cfg = SystemConfig::builder(2, 2, 1)
            .measurements(1)
            .sigma2(0.1)
            .build()
            .unwrap();
        let comps = cfg.components();
        let a = mat(1, 2, &[0.7, -1.1]);
        let est = genie_estimate(&[0.4], a.as_ref(), &comps[0], 0.1).unwrap();
        assert_eq!(est[1], 0.0);
        assert!(est[0] != 0.0);
    }
}
