mod common;

use proptest::prelude::*;

use blocksparse::mmse::{mmse_estimate, posterior_weights};
use blocksparse::replica::{
    awgn_component_mse, closed_form_xi, solve_fixed_point, theoretical_mmse, tse_hanly_residual,
    ComponentChannel, FixedPointOptions,
};
use blocksparse::source::{component_power, SystemConfig};
use common::draw;

fn config_strategy() -> impl Strategy<Value = SystemConfig> {
    (
        1usize..=6,
        2usize..=4,
        0.5f64..4.0,
        1e-3f64..1.0,
        0.1f64..3.0,
        0.0f64..0.05,
    )
        .prop_flat_map(|(r, q, beta, sigma2, sx2, d2)| {
            (1..=r).prop_map(move |k| {
                SystemConfig::builder(r * q, r, k)
                    .beta(beta)
                    .sigma2(sigma2)
                    .sigma_x2(sx2)
                    .delta2(d2.min(0.5 * sx2))
                    .build()
                    .unwrap()
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn component_trace_matches_power(cfg in config_strategy()) {
        let n = cfg.n() as f64;
        for c in cfg.components() {
            let trace: f64 = c.cov_diag.iter().sum();
            let expected = component_power(c.index.k, cfg.blocks(), cfg.sigma_x2(), cfg.delta2());
            prop_assert!((trace / n - expected).abs() <= n * f64::EPSILON * expected);
        }
    }

    #[test]
    fn posterior_weights_normalized(
        log_ev in prop::collection::vec(-800.0f64..50.0, 1..40),
        seed in 0u64..1000,
    ) {
        let priors: Vec<f64> = (0..log_ev.len())
            .map(|i| 1.0 + ((seed + i as u64) % 7) as f64)
            .collect();
        let total: f64 = priors.iter().sum();
        let priors: Vec<f64> = priors.iter().map(|p| p / total).collect();
        let w = posterior_weights(&log_ev, &priors).unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn estimator_weights_normalized(cfg in config_strategy(), trial in 0u64..1000) {
        let inst = draw(&cfg, 8, trial);
        let rep = mmse_estimate(&inst.y, inst.a.as_ref(), &inst.components, cfg.sigma2()).unwrap();
        let total: f64 = rep.evidences.iter().map(|e| e.posterior_weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
        prop_assert!(rep.estimate.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn closed_form_solves_quadratic(
        k in 1usize..=8,
        beta in 0.01f64..10.0,
        sigma2 in 1e-6f64..10.0,
    ) {
        let t = closed_form_xi(k, 8, beta, sigma2);
        let beta_k = k as f64 / 8.0 * beta;
        prop_assert!(t >= sigma2);
        prop_assert!(tse_hanly_residual(t, beta_k, sigma2) <= 1e-12);
    }

    #[test]
    fn fixed_point_above_noise_and_below_power(
        k in 1usize..=8,
        beta in 0.05f64..6.0,
        sigma2 in 1e-4f64..2.0,
        delta2 in 0.0f64..0.1,
    ) {
        let ch = ComponentChannel { k, r: 8, sigma_x2: 1.0, delta2 };
        let fp = solve_fixed_point(ch, beta, sigma2, &FixedPointOptions::default()).unwrap();
        prop_assert!(fp.converged);
        prop_assert!(fp.xi2 >= sigma2);
        let mse = awgn_component_mse(fp.xi2, k, 8, 1.0, delta2);
        prop_assert!(mse >= 0.0 && mse <= ch.power());
        prop_assert!(ch.residual(fp.xi2, beta, sigma2).abs() <= 1e-12 * fp.xi2.max(1.0));
    }

    #[test]
    fn theory_below_signal_power(cfg in config_strategy()) {
        let sol = theoretical_mmse(&cfg, &FixedPointOptions::default()).unwrap();
        prop_assert!(sol.total_mse >= 0.0);
        prop_assert!(sol.total_mse <= cfg.signal_power() * (1.0 + 1e-12));
    }
}
