//! Quantile bias correction and the risk ratio.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ScenarioSeries;
use crate::error::{Error, Result, StageExt};
use crate::evd::{EvdParams, Gev};
use crate::fitting::{fit_pp, CovariateMode, FitConfig, FitResult};
use crate::serde_ext::ext_real;
use crate::uncertainty::{lrt_lower_bound, LrtConfig, LrtMode, LrtProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    /// Observed magnitude, converted to a probability by the observation fit.
    Magnitude(f64),
    /// Probability chosen directly; the observation fit is skipped.
    Probability(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventDefinition {
    pub source: EventSource,
    /// Year whose covariate value defines the event conditions.
    #[serde(default)]
    pub year: Option<i32>,
}

impl EventDefinition {
    pub fn magnitude(z: f64, year: Option<i32>) -> Self {
        Self {
            source: EventSource::Magnitude(z),
            year,
        }
    }

    pub fn probability(p: f64, year: Option<i32>) -> Self {
        Self {
            source: EventSource::Probability(p),
            year,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.source {
            EventSource::Magnitude(z) if !z.is_finite() => Err(Error::invalid("event magnitude must be finite")),
            EventSource::Probability(p) if !(p > 0.0 && p < 1.0) => {
                Err(Error::invalid(format!("event probability must lie in (0, 1), got {p}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub fit: FitConfig,
    pub observation_mode: CovariateMode,
    pub actual_mode: CovariateMode,
    pub counterfactual_mode: CovariateMode,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            observation_mode: CovariateMode::Linear,
            actual_mode: CovariateMode::Linear,
            counterfactual_mode: CovariateMode::Stationary,
        }
    }
}

impl AttributionConfig {
    pub fn fit_for(&self, mode: CovariateMode) -> FitConfig {
        self.fit.with_mode(mode)
    }
}

/// Risk ratio evaluated at the raw observed magnitude in the actual model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncorrectedComparison {
    pub z_o: f64,
    pub p_a: f64,
    pub p_c: f64,
    #[serde(with = "ext_real")]
    pub rr: f64,
    #[serde(with = "ext_real")]
    pub log2_rr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub event: EventDefinition,
    pub p_o: f64,
    pub z_a: f64,
    pub p_c: f64,
    #[serde(with = "ext_real")]
    pub log_p_c: f64,
    #[serde(with = "ext_real")]
    pub rr: f64,
    #[serde(with = "ext_real")]
    pub log2_rr: f64,
    #[serde(with = "ext_real")]
    pub far: f64,
    /// Actual-scenario covariate at the event year.
    pub covariate_at_event: Option<f64>,
    pub observation_covariate: Option<f64>,
    pub observation_fit: Option<FitResult>,
    pub actual_fit: FitResult,
    pub counterfactual_fit: FitResult,
    pub uncorrected: Option<UncorrectedComparison>,
}

impl AttributionResult {
    pub fn p_a(&self) -> f64 {
        self.p_o
    }

    pub fn is_unbounded(&self) -> bool {
        self.log2_rr == f64::INFINITY
    }

    pub fn actual_covariate(&self) -> Vec<f64> {
        self.covariate_at_event.map(|x| vec![x]).unwrap_or_default()
    }

    pub fn fits_converged(&self) -> bool {
        self.actual_fit.converged
            && self.counterfactual_fit.converged
            && self.observation_fit.as_ref().is_none_or(|f| f.converged)
    }
}

/// Exceedance probability of the observed magnitude under the observation fit.
pub fn estimate_p_o(obs_fit: &FitResult, z_o: f64, covariate: &[f64]) -> Result<f64> {
    if !z_o.is_finite() {
        return Err(Error::invalid("event magnitude must be finite"));
    }
    Ok(obs_fit.params.at(covariate)?.exceedance_prob(z_o))
}

/// Magnitude in the actual model with the same exceedance probability.
pub fn map_to_model(actual_fit: &FitResult, p_o: f64, covariate: &[f64]) -> Result<f64> {
    return_level_at(&actual_fit.params, p_o, covariate)
}

fn return_level_at(params: &EvdParams, p: f64, covariate: &[f64]) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    params.at(covariate)?.return_level(p)
}

/// Counterfactual exceedance probability of `z_a`; exactly 0 beyond the
/// upper support bound.
pub fn estimate_p_c(cf_fit: &FitResult, z_a: f64) -> Result<f64> {
    Ok(estimate_log_p_c(cf_fit, z_a)?.exp())
}

pub fn estimate_log_p_c(cf_fit: &FitResult, z_a: f64) -> Result<f64> {
    if !cf_fit.params.is_stationary() {
        return Err(Error::invalid("counterfactual fit must be stationary"));
    }
    Ok(cf_fit.params.at(&[])?.log_exceedance_prob(z_a))
}

/// `log2(p_a) - log2(p_c)` from logs, so tiny `p_c` keeps full precision.
pub fn log2_risk_ratio(p_a: f64, log_p_c: f64) -> f64 {
    if log_p_c == f64::NEG_INFINITY {
        return if p_a > 0.0 { f64::INFINITY } else { f64::NAN };
    }
    (p_a.ln() - log_p_c) / LN_2
}

fn far_from_log2(log2_rr: f64) -> f64 {
    if log2_rr == f64::INFINITY {
        1.0
    } else {
        -(-log2_rr * LN_2).exp_m1()
    }
}

/// `log RR` (natural log) as a function of the seven actual and
/// counterfactual parameters `[beta0_a, beta1_a, sigma_a, xi_a, mu_c, sigma_c, xi_c]`
/// at fixed `p_a`. Stationary actual fits use `[mu_a, sigma_a, xi_a, ...]`.
pub fn log_rr_map(theta_a: &[f64], theta_c: &[f64], p_a: f64, covariate: &[f64]) -> Result<f64> {
    let pa = EvdParams::from_slice(theta_a)?;
    let pc = EvdParams::from_slice(theta_c)?;
    let z_a = return_level_at(&pa, p_a, covariate)?;
    let log_p_c = pc.at(&[])?.log_exceedance_prob(z_a);
    Ok(p_a.ln() - log_p_c)
}

/// Covariate vectors for the event year: (observation, actual).
fn event_covariates(
    obs: Option<&ScenarioSeries>,
    actual: &ScenarioSeries,
    event: &EventDefinition,
    config: &AttributionConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let lookup = |series: &ScenarioSeries, mode: CovariateMode| -> Result<Vec<f64>> {
        match mode {
            CovariateMode::Stationary => Ok(Vec::new()),
            CovariateMode::Linear => {
                let year = event
                    .year
                    .ok_or_else(|| Error::invalid("an event year is required with a covariate-dependent fit"))?;
                Ok(vec![series.covariate_at(year)?])
            }
        }
    };
    let x_o = match obs {
        Some(o) if matches!(event.source, EventSource::Magnitude(_)) => {
            lookup(o, config.observation_mode).stage("observation")?
        }
        _ => Vec::new(),
    };
    let x_a = lookup(actual, config.actual_mode).stage("actual")?;
    Ok((x_o, x_a))
}

/// Steps 2 to 4 from already fitted models.
pub fn attribution_from_fits(
    event: EventDefinition,
    observation_fit: Option<FitResult>,
    actual_fit: FitResult,
    counterfactual_fit: FitResult,
    x_obs: &[f64],
    x_act: &[f64],
) -> Result<AttributionResult> {
    event.validate()?;
    let p_o = match event.source {
        EventSource::Probability(p) => p,
        EventSource::Magnitude(z) => {
            let fit = observation_fit
                .as_ref()
                .ok_or_else(|| Error::invalid("a magnitude event needs an observation series"))?;
            estimate_p_o(fit, z, x_obs).stage("observation")?
        }
    };
    if !(p_o > 0.0 && p_o < 1.0) {
        return Err(Error::MethodInapplicable(format!(
            "observed event has exceedance probability {p_o} under the observation fit"
        ))
        .in_stage("observation"));
    }
    let z_a = map_to_model(&actual_fit, p_o, x_act).stage("actual")?;
    let log_p_c = estimate_log_p_c(&counterfactual_fit, z_a).stage("counterfactual")?;
    let log2_rr = log2_risk_ratio(p_o, log_p_c);

    let uncorrected = match event.source {
        EventSource::Magnitude(z) => {
            let p_a = actual_fit.params.at(x_act)?.exceedance_prob(z);
            let lpc = estimate_log_p_c(&counterfactual_fit, z)?;
            let l2 = if p_a > 0.0 { log2_risk_ratio(p_a, lpc) } else { f64::NAN };
            Some(UncorrectedComparison {
                z_o: z,
                p_a,
                p_c: lpc.exp(),
                rr: l2.exp2(),
                log2_rr: l2,
            })
        }
        EventSource::Probability(_) => None,
    };

    Ok(AttributionResult {
        event,
        p_o,
        z_a,
        p_c: log_p_c.exp(),
        log_p_c,
        rr: log2_rr.exp2(),
        log2_rr,
        far: far_from_log2(log2_rr),
        covariate_at_event: x_act.first().copied(),
        observation_covariate: x_obs.first().copied(),
        observation_fit,
        actual_fit,
        counterfactual_fit,
        uncorrected,
    })
}

/// Full pipeline: fit the three scenarios, then map the event across.
pub fn run_attribution(
    obs: Option<&ScenarioSeries>,
    actual: &ScenarioSeries,
    cf: &ScenarioSeries,
    event: EventDefinition,
    config: &AttributionConfig,
) -> Result<AttributionResult> {
    event.validate()?;
    if config.counterfactual_mode != CovariateMode::Stationary {
        return Err(Error::invalid("the counterfactual scenario is fitted without a covariate"));
    }
    let (x_o, x_a) = event_covariates(obs, actual, &event, config)?;
    let observation_fit = match event.source {
        EventSource::Magnitude(_) => {
            let o = obs.ok_or_else(|| Error::invalid("a magnitude event needs an observation series"))?;
            Some(fit_pp(o, &config.fit_for(config.observation_mode)).stage("observation fit")?)
        }
        EventSource::Probability(_) => None,
    };
    let actual_fit = fit_pp(actual, &config.fit_for(config.actual_mode)).stage("actual fit")?;
    let cf_fit = fit_pp(cf, &config.fit_for(CovariateMode::Stationary)).stage("counterfactual fit")?;
    attribution_from_fits(event, observation_fit, actual_fit, cf_fit, &x_o, &x_a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub p_a: f64,
    pub z_a: f64,
    pub p_c: f64,
    #[serde(with = "ext_real")]
    pub log2_rr: f64,
    /// One-sided interval `[lower, inf)` on the log2 scale; NaN if the bound failed.
    #[serde(with = "ext_real")]
    pub log2_lower: f64,
    #[serde(with = "ext_real")]
    pub rr_lower: f64,
    pub lrt_mode: LrtMode,
    pub message: Option<String>,
}

/// Attribution and LRT lower bound for a list of event probabilities, with
/// rows sorted by decreasing probability. The fits are shared across rows.
pub fn sensitivity_sweep(
    actual: &ScenarioSeries,
    cf: &ScenarioSeries,
    p_values: &[f64],
    year: Option<i32>,
    config: &AttributionConfig,
    lrt: &LrtConfig,
    mode: LrtMode,
) -> Result<Vec<SensitivityRow>> {
    if p_values.is_empty() {
        return Err(Error::invalid("no event probabilities given"));
    }
    for &p in p_values {
        EventDefinition::probability(p, year).validate()?;
    }
    let mut ps = p_values.to_vec();
    ps.sort_by(|a, b| b.total_cmp(a));
    ps.dedup();

    let stub = EventDefinition::probability(ps[0], year);
    let (_, x_a) = event_covariates(None, actual, &stub, config)?;
    let actual_fit = fit_pp(actual, &config.fit_for(config.actual_mode)).stage("actual fit")?;
    let cf_fit = fit_pp(cf, &config.fit_for(CovariateMode::Stationary)).stage("counterfactual fit")?;
    let problem = LrtProblem::from_series(actual, cf, &actual_fit, &cf_fit, x_a.clone())?;

    ps.par_iter()
        .map(|&p| {
            let res = attribution_from_fits(
                EventDefinition::probability(p, year),
                None,
                actual_fit.clone(),
                cf_fit.clone(),
                &[],
                &x_a,
            )?;
            let (log2_lower, message) = match lrt_lower_bound(&problem, p, mode, lrt) {
                Ok(iv) => (iv.lower, None),
                Err(e) => (f64::NAN, Some(e.to_string())),
            };
            Ok(SensitivityRow {
                p_a: p,
                z_a: res.z_a,
                p_c: res.p_c,
                log2_rr: res.log2_rr,
                log2_lower,
                rr_lower: log2_lower.exp2(),
                lrt_mode: mode,
                message,
            })
        })
        .collect()
}

/// GEV of the fitted actual model at the event covariate.
pub fn actual_distribution(result: &AttributionResult) -> Result<Gev> {
    result.actual_fit.params.at(&result.actual_covariate())
}
