mod common;

use eventattr::attribution::{
    run_attribution, sensitivity_sweep, AttributionConfig, AttributionResult, EventDefinition,
};
use eventattr::data::{MemberLaw, ScenarioTruth, SimulatedStudy, StudyTruth};
use eventattr::evd::EvdParams;
use eventattr::fitting::CovariateMode;
use eventattr::uncertainty::{
    bootstrap_interval, delta_interval, lrt_lower_bound, BootstrapConfig, IntervalDiagnostics, LrtConfig, LrtMode,
    LrtProblem,
};
use eventattr::Error;

use common::*;

fn stationary() -> AttributionConfig {
    AttributionConfig {
        actual_mode: CovariateMode::Stationary,
        ..Default::default()
    }
}

fn by_probability(study: &SimulatedStudy, p: f64, year: Option<i32>, config: &AttributionConfig) -> AttributionResult {
    run_attribution(
        None,
        &study.actual,
        &study.counterfactual,
        EventDefinition::probability(p, year),
        config,
    )
    .unwrap()
}

/// Observations with a smaller spread than the model ensemble.
fn with_observations(p_a: f64) -> StudyTruth {
    let mut truth = paper_like_truth(p_a, MemberLaw::PointProcess);
    truth.observation = Some(ScenarioTruth {
        params: EvdParams::new(vec![0.9, 1.0], 0.45, -0.2).unwrap(),
        members: 1,
        years: (1901..=2012).collect(),
        covariate: Some(warming_path()),
        law: MemberLaw::Gev,
    });
    truth
}

#[test]
fn no_forcing_gives_no_change() {
    let mut total = 0.0;
    let runs = 20;
    for seed in 0..runs {
        let mut truth = well_behaved_truth(0.05, MemberLaw::PointProcess);
        truth.counterfactual.params = truth.actual.params.clone();
        let study = simulate(&truth, 400 + seed);
        let r = by_probability(&study, 0.05, None, &stationary());
        assert!(r.log2_rr.is_finite());
        total += r.log2_rr;
    }
    let mean = total / runs as f64;
    assert!(mean.abs() < 0.5, "mean log2 RR {mean}");
}

#[test]
fn equal_rarity_holds_at_the_event() {
    let study = simulate(&paper_like_truth(0.05, MemberLaw::PointProcess), 3);
    let r = by_probability(&study, 0.05, Some(EVENT_YEAR), &AttributionConfig::default());
    let g = r.actual_fit.params.at(&r.actual_covariate()).unwrap();
    assert!((g.exceedance_prob(r.z_a) - 0.05).abs() < 1e-10);
    assert_eq!(r.covariate_at_event, Some(study.actual.covariate_at(EVENT_YEAR).unwrap()));
}

#[test]
fn shifting_every_series_leaves_the_risk_ratio_unchanged() {
    let study = simulate(&with_observations(0.05), 17);
    let obs = study.observation.clone().unwrap();
    let z = 2.5;
    let year = Some(EVENT_YEAR);
    let config = AttributionConfig::default();
    let base = run_attribution(
        Some(&obs),
        &study.actual,
        &study.counterfactual,
        EventDefinition::magnitude(z, year),
        &config,
    )
    .unwrap();
    assert!(base.log2_rr.is_finite(), "p_o {} log2 RR {}", base.p_o, base.log2_rr);
    for c in [-7.5, 12.25] {
        let moved = run_attribution(
            Some(&obs.shifted(c)),
            &study.actual.shifted(c),
            &study.counterfactual.shifted(c),
            EventDefinition::magnitude(z + c, year),
            &config,
        )
        .unwrap();
        assert!(
            (moved.log2_rr - base.log2_rr).abs() < 1e-8,
            "shift {c}: {} vs {}",
            moved.log2_rr,
            base.log2_rr
        );
        assert!((moved.p_o - base.p_o).abs() < 1e-10);
    }
}

#[test]
fn uncorrected_comparison_understates_an_inflated_model() {
    let study = simulate(&with_observations(0.05), 23);
    let obs = study.observation.clone().unwrap();
    let config = AttributionConfig::default();
    let z_o = obs.member(0)[obs.year_index(EVENT_YEAR).unwrap()].max(2.2);
    let r = run_attribution(
        Some(&obs),
        &study.actual,
        &study.counterfactual,
        EventDefinition::magnitude(z_o, Some(EVENT_YEAR)),
        &config,
    )
    .unwrap();
    let raw = r.uncorrected.expect("magnitude events carry the comparison");
    assert!(raw.p_a > r.p_o, "raw {} corrected {}", raw.p_a, r.p_o);
    assert!(r.z_a > z_o);
    assert!(raw.log2_rr < r.log2_rr, "raw {} corrected {}", raw.log2_rr, r.log2_rr);
}

#[test]
fn unbounded_risk_ratio_completes_and_leaves_only_the_lrt() {
    let mut found = None;
    for seed in 1..=60 {
        let study = simulate(&paper_like_truth(0.01, MemberLaw::PointProcess), seed);
        let r = by_probability(&study, 0.01, Some(EVENT_YEAR), &AttributionConfig::default());
        if r.p_c == 0.0 {
            found = Some((study, r));
            break;
        }
    }
    let (study, r) = found.expect("some study puts z_A beyond the counterfactual bound");
    assert!(r.is_unbounded());
    assert_eq!(r.rr, f64::INFINITY);
    assert_eq!(r.far, 1.0);
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["rr"], "inf");
    assert!(matches!(delta_interval(&r, 0.95), Err(Error::MethodInapplicable(_))));
    let boot = bootstrap_interval(
        &r,
        &study.actual,
        &study.counterfactual,
        &BootstrapConfig::default(),
        &AttributionConfig::default(),
    );
    assert!(matches!(boot, Err(Error::MethodInapplicable(_))));
    let problem = LrtProblem::from_series(
        &study.actual,
        &study.counterfactual,
        &r.actual_fit,
        &r.counterfactual_fit,
        r.actual_covariate(),
    )
    .unwrap();
    let bound = lrt_lower_bound(&problem, 0.01, LrtMode::PcOnly, &LrtConfig::default()).unwrap();
    assert!(bound.lower.is_finite() && bound.upper == f64::INFINITY);
}

#[test]
fn sweep_is_monotone_in_the_event_probability() {
    let study = simulate(&paper_like_truth(0.1, MemberLaw::PointProcess), 2);
    let rows = sensitivity_sweep(
        &study.actual,
        &study.counterfactual,
        &[0.01, 0.2, 0.05, 0.1, 0.032, 0.023],
        Some(EVENT_YEAR),
        &AttributionConfig::default(),
        &LrtConfig::default(),
        LrtMode::PcOnly,
    )
    .unwrap();
    assert_eq!(rows.len(), 6);
    for w in rows.windows(2) {
        assert!(w[0].p_a > w[1].p_a);
        assert!(w[0].z_a < w[1].z_a, "z_A must rise as the event gets rarer");
        assert!(w[0].p_c >= w[1].p_c);
    }
}

#[test]
fn sweep_estimates_track_the_generating_truth() {
    let truth = well_behaved_truth(0.1, MemberLaw::PointProcess);
    let study = simulate(&truth, 55);
    let config = stationary();
    let boot = BootstrapConfig {
        replicates: 100,
        seed: 1,
        ..Default::default()
    };
    for p in [0.2, 0.1, 0.05] {
        let mut t = truth.clone();
        t.event = EventDefinition::probability(p, None);
        let target = t.analytic().unwrap().log2_rr;
        let r = by_probability(&study, p, None, &config);
        let b = bootstrap_interval(&r, &study.actual, &study.counterfactual, &boot, &config).unwrap();
        let IntervalDiagnostics::Bootstrap(diag) = b.diagnostics else {
            panic!("wrong diagnostics")
        };
        assert!(
            (r.log2_rr - target).abs() <= 2.0 * diag.std_error,
            "p {p}: estimate {} truth {target} se {}",
            r.log2_rr,
            diag.std_error
        );
    }
}

#[test]
fn magnitude_events_need_observations() {
    let study = simulate(&well_behaved_truth(0.1, MemberLaw::PointProcess), 1);
    let r = run_attribution(
        None,
        &study.actual,
        &study.counterfactual,
        EventDefinition::magnitude(3.0, None),
        &stationary(),
    );
    assert!(matches!(r, Err(Error::InvalidInput(_))), "{r:?}");
}
