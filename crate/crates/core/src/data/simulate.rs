//! Synthetic studies with known attribution quantities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Scenario, ScenarioSeries};
use crate::attribution::{EventDefinition, EventSource};
use crate::error::{Error, Result};
use crate::evd::{EvdParams, Gev};
use crate::serde_ext::ext_real;

/// How member values are drawn given the annual-maximum GEV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberLaw {
    /// Each member is GEV with the `members`-fold maximum equal to the
    /// annual GEV.
    #[default]
    Gev,
    /// `P(X > z) = t(z) / members` above the point where that reaches one,
    /// nothing below. Exceedances of any threshold in that range then follow
    /// the point-process model exactly.
    PointProcess,
}

/// Generating model for one scenario.
///
/// `params` describe the GEV of the per-year maximum across the `members`
/// values of that year, which is what a PP fit with one block per year of
/// `members` observations estimates. With one member and the GEV law, annual
/// values are plain GEV draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub params: EvdParams,
    pub members: usize,
    pub years: Vec<i32>,
    #[serde(default)]
    pub covariate: Option<Vec<f64>>,
    #[serde(default)]
    pub law: MemberLaw,
}

impl ScenarioTruth {
    fn validate(&self, name: &str) -> Result<()> {
        if self.members == 0 || self.years.is_empty() {
            return Err(Error::invalid(format!("{name}: need at least one member and one year")));
        }
        match (&self.covariate, self.params.n_covariates()) {
            (_, 0) => Ok(()),
            (Some(c), 1) if c.len() == self.years.len() => Ok(()),
            (Some(_), 1) => Err(Error::invalid(format!("{name}: covariate length differs from years"))),
            (None, 1) => Err(Error::invalid(format!("{name}: covariate slope without covariate path"))),
            _ => Err(Error::invalid(format!("{name}: only one covariate is supported"))),
        }
    }

    fn covariate_vec(&self, year_index: usize) -> Vec<f64> {
        if self.params.is_stationary() {
            Vec::new()
        } else {
            vec![self.covariate.as_ref().expect("validated")[year_index]]
        }
    }

    /// GEV of the annual ensemble maximum in year `year_index`.
    pub fn annual_distribution(&self, year_index: usize) -> Result<Gev> {
        self.params.at(&self.covariate_vec(year_index))
    }

    /// Distribution of a single member value in year `year_index`.
    pub fn member_distribution(&self, year_index: usize) -> Result<Gev> {
        Ok(self.annual_distribution(year_index)?.block_component(self.members))
    }

    fn distribution_at_year(&self, year: i32) -> Result<Gev> {
        let i = self
            .years
            .iter()
            .position(|&y| y == year)
            .ok_or_else(|| Error::invalid(format!("event year {year} not among simulated years")))?;
        self.annual_distribution(i)
    }

    fn event_distribution(&self, year: Option<i32>) -> Result<Gev> {
        if self.params.is_stationary() {
            return self.annual_distribution(0);
        }
        let year = year.ok_or_else(|| Error::invalid("event year required with a covariate"))?;
        self.distribution_at_year(year)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTruth {
    #[serde(default)]
    pub observation: Option<ScenarioTruth>,
    pub actual: ScenarioTruth,
    pub counterfactual: ScenarioTruth,
    pub event: EventDefinition,
}

/// Attribution quantities implied by the generating models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticAttribution {
    pub p_a: f64,
    pub z_a: f64,
    pub p_c: f64,
    #[serde(with = "ext_real")]
    pub log_p_c: f64,
    #[serde(with = "ext_real")]
    pub rr: f64,
    #[serde(with = "ext_real")]
    pub log2_rr: f64,
}

impl StudyTruth {
    pub fn analytic(&self) -> Result<AnalyticAttribution> {
        let p_a = match self.event.source {
            EventSource::Probability(p) => p,
            EventSource::Magnitude(z) => {
                let obs = self
                    .observation
                    .as_ref()
                    .ok_or_else(|| Error::invalid("magnitude event needs an observation truth"))?;
                obs.event_distribution(self.event.year)?.exceedance_prob(z)
            }
        };
        let z_a = self.actual.event_distribution(self.event.year)?.return_level(p_a)?;
        let cf = self.counterfactual.annual_distribution(0)?;
        if !self.counterfactual.params.is_stationary() {
            return Err(Error::invalid("counterfactual truth must be stationary"));
        }
        let log_p_c = cf.log_exceedance_prob(z_a);
        let log2_rr = (p_a.ln() - log_p_c) / std::f64::consts::LN_2;
        Ok(AnalyticAttribution {
            p_a,
            z_a,
            p_c: log_p_c.exp(),
            log_p_c,
            rr: log2_rr.exp2(),
            log2_rr,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedStudy {
    pub observation: Option<ScenarioSeries>,
    pub actual: ScenarioSeries,
    pub counterfactual: ScenarioSeries,
    pub truth: AnalyticAttribution,
}

fn point_process_draw(annual: &Gev, members: usize, rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            let t = members as f64 * u;
            return annual.quantile((-t).exp()).expect("t > 0");
        }
    }
}

fn draw(truth: &ScenarioTruth, scenario: Scenario, rng: &mut ChaCha8Rng) -> Result<ScenarioSeries> {
    let mut values = vec![Vec::with_capacity(truth.years.len()); truth.members];
    for i in 0..truth.years.len() {
        let annual = truth.annual_distribution(i)?;
        let member = annual.block_component(truth.members);
        for row in values.iter_mut() {
            row.push(match truth.law {
                MemberLaw::Gev => member.sample(rng),
                MemberLaw::PointProcess => point_process_draw(&annual, truth.members, rng),
            });
        }
    }
    ScenarioSeries::new(scenario, truth.years.clone(), values, truth.covariate.clone())
}

/// Draw the series of a synthetic study by inverse-CDF sampling.
///
/// Each scenario uses its own random stream of `seed`, so adding or removing
/// the observation scenario leaves the model scenarios unchanged.
pub fn simulate_study(truth: &StudyTruth, seed: u64) -> Result<SimulatedStudy> {
    if let Some(o) = &truth.observation {
        o.validate("observation")?;
        if o.members != 1 {
            return Err(Error::invalid("observation truth must have one member"));
        }
    }
    truth.actual.validate("actual")?;
    truth.counterfactual.validate("counterfactual")?;
    let analytic = truth.analytic()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let actual = draw(&truth.actual, Scenario::Actual, &mut rng)?;
    rng.set_stream(2);
    rng.set_word_pos(0);
    let counterfactual = draw(&truth.counterfactual, Scenario::Counterfactual, &mut rng)?;
    let observation = match &truth.observation {
        Some(o) => {
            rng.set_stream(3);
            rng.set_word_pos(0);
            Some(draw(o, Scenario::Observation, &mut rng)?)
        }
        None => None,
    };
    Ok(SimulatedStudy {
        observation,
        actual,
        counterfactual,
        truth: analytic,
    })
}

/// `start + (end - start) * s^power` for `s` evenly spaced on `[0, 1]`.
pub fn covariate_ramp(n: usize, start: f64, end: f64, power: f64) -> Vec<f64> {
    if n == 1 {
        return vec![end];
    }
    (0..n)
        .map(|i| start + (end - start) * (i as f64 / (n - 1) as f64).powf(power))
        .collect()
}
