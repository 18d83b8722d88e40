use proptest::prelude::*;

use varcausal::bounds::prop1_bound;
use varcausal::companion::{power_entry_via_schur, DISTINCT_TOL};
use varcausal::estimators::{build_design, fit_ols, fit_regularized};
use varcausal::harness::{self, ExperimentConfig, Mode};
use varcausal::process::{exact_autocov, lyapunov_residual, rejection_sample_stable, simulate, stationary_state_cov};
use varcausal::risk::{causal_risk, noise_floors, risk_difference, stat_risk, ModelPair};
use varcausal::{Estimator, InterventionSpec, VarModel};

fn stable(p: usize, d: usize, seed: u64) -> VarModel {
    let r = 1.5 / (p * d) as f64;
    rejection_sample_stable(p, d, -r, r, seed, 100_000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn schur_row_matches_dense_power(p in 1usize..6, omega in 1usize..9, seed in any::<u64>()) {
        let m = stable(p, 1, seed);
        let c = m.companion();
        prop_assume!(c.spectrum(DISTINCT_TOL).unwrap().distinct);
        let dense = c.power(omega as u32);
        for col in 0..p {
            let v = power_entry_via_schur(&c, omega, col).unwrap();
            let want = dense[(0, col)].abs();
            prop_assert!((v - want).abs() <= 1e-8 * (1.0 + want));
        }
    }

    #[test]
    fn stationary_covariance_solves_lyapunov(p in 1usize..5, d in 1usize..4, seed in any::<u64>()) {
        let m = stable(p, d, seed);
        let sigma = stationary_state_cov(&m).unwrap();
        let scale = sigma.diagonal().max();
        prop_assert!(lyapunov_residual(&m, &sigma) <= 1e-10 * scale.max(1.0));
        prop_assert!((&sigma - sigma.transpose()).amax() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn correct_model_has_no_gap(p in 1usize..5, d in 1usize..3, omega in 1usize..6, seed in any::<u64>()) {
        let m = stable(p, d, seed);
        let pair = ModelPair::new(m.clone(), m.clone()).unwrap();
        let s = stat_risk(&pair, omega).unwrap();
        let floors = noise_floors(&m, omega).unwrap();
        for i in 0..d {
            let g = causal_risk(&pair, &InterventionSpec::averaged(omega, vec![i])).unwrap();
            prop_assert!((s[i] - floors[i]).abs() <= 1e-10 * floors[i]);
            prop_assert!((g[i] - s[i]).abs() <= 1e-10 * s[i]);
        }
    }

    #[test]
    fn risks_are_at_least_the_noise_floor(p in 1usize..5, q in 1usize..5, omega in 1usize..6, seed in any::<u64>()) {
        let truth = stable(q, 1, seed);
        let fitted = stable(p, 1, seed.wrapping_add(1));
        let pair = ModelPair::new(truth.clone(), fitted).unwrap();
        let floor = noise_floors(&truth, omega).unwrap()[0];
        let s = stat_risk(&pair, omega).unwrap()[0];
        let g = causal_risk(&pair, &InterventionSpec::averaged(omega, vec![0])).unwrap()[0];
        prop_assert!(s >= floor * (1.0 - 1e-12));
        prop_assert!(g >= floor * (1.0 - 1e-12));
    }

    #[test]
    fn gap_expansion_matches_quadratic_form(p in 1usize..5, q in 1usize..5, d in 1usize..3, seed in any::<u64>()) {
        let pair = ModelPair::new(stable(q, d, seed), stable(p, d, seed ^ 0x5a5a)).unwrap();
        let diff = risk_difference(&pair, &InterventionSpec::averaged(1, vec![0])).unwrap();
        for (a, b) in diff.quadratic.iter().zip(&diff.expansion) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn condition_number_bound_dominates(p in 1usize..5, q in 1usize..5, d in 1usize..3, omega in 1usize..4, seed in any::<u64>()) {
        let pair = ModelPair::new(stable(q, d, seed), stable(p, d, seed.rotate_left(7))).unwrap();
        for i in 0..d {
            let b = prop1_bound(&pair, omega, i).unwrap();
            prop_assert_eq!(b.holds, Some(true), "{:?}", b);
        }
    }

    #[test]
    fn autocovariance_is_symmetric_toeplitz(p in 1usize..5, n in 1usize..7, seed in any::<u64>()) {
        let m = stable(p, 1, seed);
        let a = exact_autocov(&m, n).unwrap();
        let s = a.dense();
        for r in 0..n {
            for c in 0..n {
                prop_assert!((s[(r, c)] - a.lag(r.abs_diff(c))[(0, 0)]).abs() <= 1e-12 * a.gamma0());
            }
        }
        prop_assert!(s.clone().symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn huge_penalty_zeroes_lasso(seed in any::<u64>()) {
        let m = stable(2, 1, seed);
        let path = simulate(&m, 200, seed, None).unwrap();
        let design = build_design(&path, 2).unwrap();
        let fit = fit_regularized(&design, Estimator::Lasso, 1e6, 1.0).unwrap();
        prop_assert!(fit.model.coeffs().iter().all(|b| b.amax() == 0.0));
    }

    #[test]
    fn ridge_shrinks_towards_zero(seed in any::<u64>()) {
        let m = stable(3, 1, seed);
        let path = simulate(&m, 200, seed, None).unwrap();
        let design = build_design(&path, 3).unwrap();
        let norm = |f: &varcausal::FitResult| f.model.coeffs().iter().map(|b| b.norm_squared()).sum::<f64>();
        let ols = norm(&fit_ols(&design).unwrap());
        let small = norm(&fit_regularized(&design, Estimator::Ridge, 0.1, 0.0).unwrap());
        let large = norm(&fit_regularized(&design, Estimator::Ridge, 10.0, 0.0).unwrap());
        prop_assert!(large <= small * (1.0 + 1e-12) && small <= ols * (1.0 + 1e-12));
    }
}

#[test]
fn harness_output_is_independent_of_thread_count() {
    let base = ExperimentConfig { n_processes: 24, bucket_size: 6, master_seed: 9, mode: Mode::Standard, ..Default::default() };
    let one = harness::run(&ExperimentConfig { threads: Some(1), ..base.clone() }).unwrap();
    let many = harness::run(&ExperimentConfig { threads: Some(4), ..base }).unwrap();
    assert_eq!(one.records, many.records);
    assert_eq!(one.summaries, many.summaries);
    assert_eq!(one.metadata.summaries, many.metadata.summaries);
}

#[test]
fn ols_recovers_coefficients_on_long_paths() {
    let m = VarModel::scalar(&[0.5, -0.3], 1.0).unwrap();
    let path = simulate(&m, 20_000, 3, None).unwrap();
    let fit = fit_ols(&build_design(&path, 2).unwrap()).unwrap();
    let got = fit.model.scalar_coeffs().unwrap();
    assert!((got[0] - 0.5).abs() < 0.03 && (got[1] + 0.3).abs() < 0.03, "{got:?}");
    assert!((fit.model.noise_variance() - 1.0).abs() < 0.05);
}
