#![allow(dead_code)]

use eventattr::attribution::EventDefinition;
use eventattr::data::{covariate_ramp, simulate_study, MemberLaw, ScenarioTruth, SimulatedStudy, StudyTruth};
use eventattr::evd::EvdParams;

pub const EVENT_YEAR: i32 = 2011;

/// Covariate path rising to about 0.92 in the event year.
pub fn warming_path() -> Vec<f64> {
    covariate_ramp(112, -0.1, 0.93, 2.0)
}

/// Five members over 1901-2012 with a covariate trend, twelve stationary
/// centuries without.
pub fn paper_like_truth(p_a: f64, law: MemberLaw) -> StudyTruth {
    StudyTruth {
        observation: None,
        actual: ScenarioTruth {
            params: EvdParams::new(vec![1.263, 1.382], 0.926, -0.197).unwrap(),
            members: 5,
            years: (1901..=2012).collect(),
            covariate: Some(warming_path()),
            law,
        },
        counterfactual: ScenarioTruth {
            params: EvdParams::stationary(1.415, 0.638, -0.179).unwrap(),
            members: 12,
            years: (1..=100).collect(),
            covariate: None,
            law,
        },
        event: EventDefinition::probability(p_a, Some(EVENT_YEAR)),
    }
}

/// Unbounded tails in both scenarios and a moderate risk ratio.
pub fn well_behaved_truth(p_a: f64, law: MemberLaw) -> StudyTruth {
    StudyTruth {
        observation: None,
        actual: ScenarioTruth {
            params: EvdParams::stationary(2.0, 0.8, 0.05).unwrap(),
            members: 12,
            years: (1..=100).collect(),
            covariate: None,
            law,
        },
        counterfactual: ScenarioTruth {
            params: EvdParams::stationary(1.4, 0.75, 0.05).unwrap(),
            members: 12,
            years: (1..=100).collect(),
            covariate: None,
            law,
        },
        event: EventDefinition::probability(p_a, None),
    }
}

pub fn simulate(truth: &StudyTruth, seed: u64) -> SimulatedStudy {
    simulate_study(truth, seed).expect("valid truth")
}
