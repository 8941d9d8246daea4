use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{IntervalDiagnostics, IntervalResult, Method};
use crate::attribution::{log2_risk_ratio, AttributionConfig, AttributionResult};
use crate::data::ScenarioSeries;
use crate::error::{Error, Result};
use crate::fitting::{empirical_quantile, fit_sample, CovariateMode, FitConfig, FitSample};
use crate::serde_ext::{ext_real, ext_real_vec};

const MAX_FAILED_FRACTION: f64 = 0.2;
const UNRELIABLE_INFINITE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub resample_members: bool,
    pub resample_years: bool,
    /// Draw a separate year set for every resampled member instead of one
    /// shared set per scenario.
    pub per_member_years: bool,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 500,
            resample_members: true,
            resample_years: true,
            per_member_years: false,
            seed: 0,
            level: 0.95,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid("bootstrap needs at least two replicates"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDiagnostics {
    pub replicates: usize,
    pub finite: usize,
    pub infinite: usize,
    pub failed: usize,
    /// More than a tenth of the replicates had an infinite risk ratio.
    pub unreliable: bool,
    #[serde(with = "ext_real")]
    pub q_lower: f64,
    #[serde(with = "ext_real")]
    pub q_upper: f64,
    /// Standard deviation of the finite replicate values.
    #[serde(with = "ext_real")]
    pub std_error: f64,
    /// log2 RR per replicate in replicate order; NaN marks a failed fit.
    #[serde(with = "ext_real_vec")]
    pub values: Vec<f64>,
    pub summary: String,
}

fn resample_indices(rng: &mut ChaCha8Rng, n: usize, active: bool) -> Vec<usize> {
    if active {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

fn resample(series: &ScenarioSeries, config: &BootstrapConfig, rng: &mut ChaCha8Rng) -> Result<FitSample> {
    let m = series.n_members();
    let n = series.n_years();
    let members = resample_indices(rng, m, config.resample_members);
    let year_sets: Vec<Vec<usize>> = if config.per_member_years {
        (0..m).map(|_| resample_indices(rng, n, config.resample_years)).collect()
    } else {
        vec![resample_indices(rng, n, config.resample_years); m]
    };
    let cov = series.covariate();
    let mut values = Vec::with_capacity(m * n);
    let mut covs = cov.map(|_| Vec::with_capacity(m * n));
    for s in 0..n {
        for (j, &member) in members.iter().enumerate() {
            let y = year_sets[j][s];
            values.push(series.member(member)[y]);
            if let (Some(out), Some(c)) = (covs.as_mut(), cov) {
                out.push(c[y]);
            }
        }
    }
    FitSample::new(values, covs, m)
}

/// log2 RR for replicate `b`; each replicate draws from its own stream of
/// the seed, so results do not depend on scheduling.
pub fn bootstrap_replicate(
    b: usize,
    attr: &AttributionResult,
    actual: &ScenarioSeries,
    cf: &ScenarioSeries,
    config: &BootstrapConfig,
    fits: &AttributionConfig,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(b as u64);
    let a_sample = resample(actual, config, &mut rng)?;
    let c_sample = resample(cf, config, &mut rng)?;
    let quiet = |mode: CovariateMode| FitConfig {
        compute_covariance: false,
        ..fits.fit_for(mode)
    };
    let a_fit = fit_sample(&a_sample, &quiet(attr.actual_fit.covariate_mode))?;
    let c_fit = fit_sample(&c_sample, &quiet(CovariateMode::Stationary))?;
    let z_a = a_fit.params.at(&attr.actual_covariate())?.return_level(attr.p_o)?;
    let log_p_c = c_fit.params.at(&[])?.log_exceedance_prob(z_a);
    Ok(log2_risk_ratio(attr.p_o, log_p_c))
}

/// Basic bootstrap interval for log2 RR at the fixed event probability of
/// `attr`. Replicates with an infinite risk ratio are excluded from the
/// quantiles and counted.
pub fn bootstrap_interval(
    attr: &AttributionResult,
    actual: &ScenarioSeries,
    cf: &ScenarioSeries,
    config: &BootstrapConfig,
    fits: &AttributionConfig,
) -> Result<IntervalResult> {
    config.validate()?;
    let est = attr.log2_rr;
    if !est.is_finite() {
        return Err(Error::MethodInapplicable(
            "point estimate is infinite; the basic bootstrap interval is undefined".into(),
        ));
    }
    let values: Vec<f64> = (0..config.replicates)
        .into_par_iter()
        .map(|b| bootstrap_replicate(b, attr, actual, cf, config, fits).unwrap_or(f64::NAN))
        .collect();

    let failed = values.iter().filter(|v| v.is_nan()).count();
    let infinite = values.iter().filter(|v| v.is_infinite()).count();
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let b = config.replicates;
    if failed as f64 > MAX_FAILED_FRACTION * b as f64 {
        return Err(Error::MethodInapplicable(format!("{failed} of the {b} bootstrap refits failed")));
    }
    if finite.is_empty() {
        return Err(Error::MethodInapplicable(format!(
            "all {} usable bootstrap samples have an infinite risk ratio",
            b - failed
        )));
    }
    finite.sort_by(f64::total_cmp);
    let alpha = 1.0 - config.level;
    let q_lower = empirical_quantile(&finite, 0.5 * alpha);
    let q_upper = empirical_quantile(&finite, 1.0 - 0.5 * alpha);
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let std_error = if finite.len() > 1 {
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };

    let mut summary = format!("{infinite} of the {b} bootstrap samples are excluded (infinite risk ratio)");
    if failed > 0 {
        summary.push_str(&format!("; {failed} refits failed"));
    }
    let unreliable = infinite as f64 > UNRELIABLE_INFINITE_FRACTION * b as f64;
    if unreliable {
        summary.push_str("; interval unreliable");
    }
    Ok(IntervalResult {
        method: Method::Bootstrap,
        level: config.level,
        estimate: est,
        lower: 2.0 * est - q_upper,
        upper: 2.0 * est - q_lower,
        diagnostics: IntervalDiagnostics::Bootstrap(BootstrapDiagnostics {
            replicates: b,
            finite: finite.len(),
            infinite,
            failed,
            unreliable,
            q_lower,
            q_upper,
            std_error,
            values,
            summary,
        }),
    })
}
