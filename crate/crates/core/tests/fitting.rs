mod common;

use eventattr::data::{MemberLaw, Scenario, ScenarioSeries};
use eventattr::fitting::{
    compare_aic, fit_pp, mean_residual_life, mrl_thresholds, select_threshold, CovariateMode, FitConfig, FitResult,
    ModelChoice,
};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use common::*;

fn linear() -> FitConfig {
    FitConfig::default().with_mode(CovariateMode::Linear)
}

#[test]
fn trend_data_prefers_the_covariate_model() {
    let mut wins = 0;
    for seed in 0..10 {
        let study = simulate(&paper_like_truth(0.1, MemberLaw::PointProcess), 600 + seed);
        let flat = fit_pp(&study.actual, &FitConfig::default()).unwrap();
        let trend = fit_pp(&study.actual, &linear()).unwrap();
        let cmp = compare_aic(&flat, &trend).unwrap();
        assert!(trend.loglik >= flat.loglik - 1e-6, "nested fit lost likelihood");
        if cmp.preferred == ModelChoice::Second {
            wins += 1;
        }
    }
    assert_eq!(wins, 10);
}

#[test]
fn stationary_data_rarely_needs_the_covariate() {
    let mut flat_wins = 0;
    for seed in 0..20 {
        let mut truth = paper_like_truth(0.1, MemberLaw::PointProcess);
        truth.actual.params.beta[1] = 0.0;
        let study = simulate(&truth, 700 + seed);
        let flat = fit_pp(&study.actual, &FitConfig::default()).unwrap();
        let trend = fit_pp(&study.actual, &linear()).unwrap();
        if compare_aic(&flat, &trend).unwrap().preferred == ModelChoice::First {
            flat_wins += 1;
        }
    }
    assert!(flat_wins >= 14, "stationary model preferred in {flat_wins} of 20");
}

#[test]
fn fit_survives_json() {
    let study = simulate(&paper_like_truth(0.1, MemberLaw::PointProcess), 4);
    let fit = fit_pp(&study.actual, &linear()).unwrap();
    let text = serde_json::to_string(&fit).unwrap();
    let back: FitResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back.params.to_vec(), fit.params.to_vec());
    assert_eq!(back.covariance, fit.covariance);
    assert_eq!(back.threshold, fit.threshold);
}

#[test]
fn mrl_rows_follow_the_thresholds() {
    let study = simulate(&well_behaved_truth(0.1, MemberLaw::PointProcess), 6);
    let ts = mrl_thresholds(&study.actual, 0.5, 0.95, 10).unwrap();
    let table = mean_residual_life(&study.actual, &ts).unwrap();
    assert_eq!(table.rows.len(), 10);
    for w in table.rows.windows(2) {
        assert!(w[0].threshold < w[1].threshold);
        assert!(w[0].count > w[1].count);
    }
    assert!(table.rows.iter().all(|r| r.mean_excess > 0.0 && r.std_error > 0.0));
}

fn shifted_ensemble(c: f64, seed: u64) -> ScenarioSeries {
    simulate(&well_behaved_truth(0.1, MemberLaw::PointProcess), seed).actual.shifted(c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covariance_is_symmetric_and_positive(seed in 0u64..10_000) {
        let study = simulate(&paper_like_truth(0.1, MemberLaw::PointProcess), seed);
        let fit = fit_pp(&study.actual, &linear()).unwrap();
        let cov = fit.covariance_matrix().unwrap();
        let asym = (&cov - cov.transpose()).abs().max();
        prop_assert!(asym <= 1e-12 * cov.abs().max());
        let eig = SymmetricEigen::new(cov).eigenvalues;
        prop_assert!(eig.iter().all(|&e| e >= 0.0), "{eig:?}");
    }

    #[test]
    fn location_shift_moves_only_the_location(seed in 0u64..10_000, c in -20.0f64..20.0) {
        let base = fit_pp(&shifted_ensemble(0.0, seed), &FitConfig::default()).unwrap();
        let moved = fit_pp(&shifted_ensemble(c, seed), &FitConfig::default()).unwrap();
        prop_assert!((moved.threshold - base.threshold - c).abs() < 1e-9);
        prop_assert!((moved.params.beta[0] - base.params.beta[0] - c).abs() < 1e-6);
        prop_assert!((moved.params.sigma - base.params.sigma).abs() < 1e-6);
        prop_assert!((moved.params.xi - base.params.xi).abs() < 1e-6);
        prop_assert_eq!(moved.n_exceedances, base.n_exceedances);
    }

    #[test]
    fn threshold_splits_the_pool(values in prop::collection::vec(-100f64..100.0, 40..200), q in 0.5f64..0.95) {
        let s = ScenarioSeries::new(Scenario::Observation, (0..values.len() as i32).collect(), vec![values.clone()], None).unwrap();
        let u = select_threshold(&s, q).unwrap();
        let below = values.iter().filter(|&&v| v <= u).count() as f64 / values.len() as f64;
        prop_assert!(below >= q - 1.0 / values.len() as f64);
    }
}
