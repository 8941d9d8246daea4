//! Maximum-likelihood fitting of the point-process model.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::ScenarioSeries;
use crate::error::{Error, Result};
use crate::evd::{
    pp_log_likelihood_gradient, pp_loglik, EvdParams, Exceedance, ExceedanceSet, IntensityBlock,
};
use crate::optim::{self, OptimizerSettings};
use crate::serde_ext::ext_real;

pub const MIN_POOLED_VALUES: usize = 30;
pub const MIN_EXCEEDANCES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateMode {
    Stationary,
    /// `mu_t = beta_0 + beta_1 x_t`
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub threshold_quantile: f64,
    pub covariate_mode: CovariateMode,
    pub optimizer: OptimizerSettings,
    /// Relative Hessian step; absolute floor is `hessian_floor`.
    pub hessian_step: f64,
    pub hessian_floor: f64,
    /// Skip the Hessian when only the point estimate is needed (bootstrap).
    pub compute_covariance: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            threshold_quantile: 0.80,
            covariate_mode: CovariateMode::Stationary,
            optimizer: OptimizerSettings::default(),
            hessian_step: 1e-4,
            hessian_floor: 1e-6,
            compute_covariance: true,
        }
    }
}

impl FitConfig {
    pub fn with_mode(mut self, mode: CovariateMode) -> Self {
        self.covariate_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile < 1.0) {
            return Err(Error::invalid(format!(
                "threshold quantile must lie in (0, 1), got {}",
                self.threshold_quantile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    /// Index of the starting point that produced the reported optimum.
    pub start: usize,
    pub starts_tried: usize,
    #[serde(with = "ext_real")]
    pub max_abs_gradient: f64,
    pub pseudo_inverse_covariance: bool,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: EvdParams,
    pub loglik: f64,
    /// Over `[beta..., sigma, xi]`; empty when not computed.
    pub covariance: Vec<Vec<f64>>,
    pub threshold: f64,
    pub n_exceedances: usize,
    pub n_total: usize,
    pub n_per_year: usize,
    pub aic: f64,
    pub converged: bool,
    pub covariate_mode: CovariateMode,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn n_free(&self) -> usize {
        self.params.n_free()
    }

    pub fn has_covariance(&self) -> bool {
        !self.covariance.is_empty()
    }

    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        if self.covariance.is_empty() {
            return None;
        }
        let n = self.covariance.len();
        Some(DMatrix::from_fn(n, n, |i, j| self.covariance[i][j]))
    }

    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        if self.covariance.is_empty() {
            return None;
        }
        Some((0..self.covariance.len()).map(|i| self.covariance[i][i].max(0.0).sqrt()).collect())
    }

    /// Covariate vector for evaluating this fit in a given year of `series`.
    pub fn covariate_for_year(&self, series: &ScenarioSeries, year: Option<i32>) -> Result<Vec<f64>> {
        if self.params.is_stationary() {
            return Ok(Vec::new());
        }
        let year = year.ok_or_else(|| Error::invalid("an event year is required for a covariate-dependent fit"))?;
        Ok(vec![series.covariate_at(year)?])
    }
}

/// Observations laid out slot by slot: slot `s` holds one value per member.
/// A slot is a (possibly resampled) year.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSample {
    values: Vec<f64>,
    covariates: Option<Vec<f64>>,
    n_per_year: usize,
}

impl FitSample {
    pub fn new(values: Vec<f64>, covariates: Option<Vec<f64>>, n_per_year: usize) -> Result<Self> {
        if n_per_year == 0 || values.len() % n_per_year != 0 {
            return Err(Error::invalid("values do not split into whole years"));
        }
        if let Some(c) = &covariates {
            if c.len() != values.len() {
                return Err(Error::invalid("one covariate value per observation required"));
            }
        }
        Ok(Self {
            values,
            covariates,
            n_per_year,
        })
    }

    pub fn from_series(series: &ScenarioSeries) -> Self {
        let m = series.n_members();
        let mut values = Vec::with_capacity(series.len());
        let mut covs = series.covariate().map(|_| Vec::with_capacity(series.len()));
        for y in 0..series.n_years() {
            for j in 0..m {
                values.push(series.member(j)[y]);
                if let (Some(out), Some(c)) = (covs.as_mut(), series.covariate()) {
                    out.push(c[y]);
                }
            }
        }
        Self {
            values,
            covariates: covs,
            n_per_year: m,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_per_year(&self) -> usize {
        self.n_per_year
    }

    pub fn has_covariate(&self) -> bool {
        self.covariates.is_some()
    }

    fn covariate_vec(&self, i: usize, mode: CovariateMode) -> Vec<f64> {
        match mode {
            CovariateMode::Stationary => Vec::new(),
            CovariateMode::Linear => vec![self.covariates.as_ref().expect("checked by caller")[i]],
        }
    }

    /// Per-slot maximum and its covariate.
    fn slot_maxima(&self) -> Vec<(f64, f64)> {
        self.values
            .chunks(self.n_per_year)
            .enumerate()
            .map(|(s, chunk)| {
                let (k, v) = chunk
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
                let x = self
                    .covariates
                    .as_ref()
                    .map(|c| c[s * self.n_per_year + k])
                    .unwrap_or(0.0);
                (v, x)
            })
            .collect()
    }

    /// Exceedances of `threshold` plus the intensity blocks for the PP
    /// likelihood. Consecutive observations sharing a covariate share a block.
    pub fn exceedance_set(&self, threshold: f64, mode: CovariateMode) -> Result<ExceedanceSet> {
        if mode == CovariateMode::Linear && self.covariates.is_none() {
            return Err(Error::invalid("covariate-dependent fit needs a covariate for every year"));
        }
        let mut exceedances = Vec::new();
        let mut blocks: Vec<IntensityBlock> = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            let x = self.covariate_vec(i, mode);
            if v > threshold {
                exceedances.push(Exceedance {
                    value: v,
                    covariate: x.clone(),
                    year_index: i / self.n_per_year,
                });
            }
            match blocks.last_mut() {
                Some(b) if b.covariate == x => b.count += 1,
                _ => blocks.push(IntensityBlock { covariate: x, count: 1 }),
            }
        }
        ExceedanceSet::new(threshold, exceedances, blocks, self.n_per_year)
    }
}

/// Linear-interpolation quantile of sorted data at position `(n-1) q`.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn quantile_of(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("cannot take a quantile of an empty series"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(empirical_quantile(&v, q))
}

/// Empirical `q`-quantile of all pooled values.
pub fn select_threshold(series: &ScenarioSeries, q: f64) -> Result<f64> {
    let v: Vec<f64> = series.pooled().collect();
    quantile_of(&v, q)
}

pub fn fit_pp(series: &ScenarioSeries, config: &FitConfig) -> Result<FitResult> {
    fit_sample(&FitSample::from_series(series), config)
}

fn map_params(theta: &[f64]) -> (&[f64], f64, f64) {
    let n = theta.len();
    (&theta[..n - 2], theta[n - 2].exp(), theta[n - 1])
}

/// Fit the PP model to a prepared sample.
pub fn fit_sample(sample: &FitSample, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if sample.values.len() < MIN_POOLED_VALUES {
        return Err(Error::invalid(format!(
            "need at least {MIN_POOLED_VALUES} values, got {}",
            sample.values.len()
        )));
    }
    let mode = config.covariate_mode;
    let threshold = quantile_of(&sample.values, config.threshold_quantile)?;
    let data = sample.exceedance_set(threshold, mode)?;
    let m = data.exceedances().len();
    if m < MIN_EXCEEDANCES {
        return Err(Error::InsufficientExceedances {
            found: m,
            required: MIN_EXCEEDANCES,
        });
    }
    let first = data.exceedances()[0].value;
    if data.exceedances().iter().all(|e| e.value == first) {
        return Err(Error::FitFailure("all exceedances are equal; the likelihood is unbounded".into()));
    }

    // Work relative to the threshold; only the intercept moves.
    let centered = data.shifted(-threshold);
    let nll = |theta: &[f64]| {
        let (beta, sigma, xi) = map_params(theta);
        -pp_loglik(&centered, beta, sigma, xi)
    };
    let nll_grad = |theta: &[f64]| {
        let (beta, sigma, xi) = map_params(theta);
        let p = EvdParams {
            beta: beta.to_vec(),
            sigma,
            xi,
        };
        pp_log_likelihood_gradient(&centered, &p).map(|mut g| {
            let n = g.len();
            g[n - 2] *= sigma;
            g.iter_mut().for_each(|v| *v = -*v);
            g
        })
    };

    let starts = starting_points(sample, threshold, mode);
    let nb = if mode == CovariateMode::Linear { 2 } else { 1 };
    let mut best: Option<(usize, optim::Minimum)> = None;
    let mut tried = 0;
    for (k, start) in starts.iter().enumerate() {
        if !nll(start).is_finite() {
            continue;
        }
        tried += 1;
        let mut steps = vec![0.0; start.len()];
        let scale = start[nb].exp();
        steps[0] = 0.5 * scale;
        if nb == 2 {
            steps[1] = 0.5 * scale;
        }
        steps[nb] = 0.3;
        steps[nb + 1] = 0.1;
        let run = optim::nelder_mead_restarted(nll, start, &steps, &config.optimizer, 3);
        if best.as_ref().is_none_or(|(_, b)| run.value < b.value) {
            best = Some((k, run));
        }
    }
    let Some((start_index, simplex)) = best.filter(|(_, b)| b.value.is_finite()) else {
        return Err(Error::FitFailure("likelihood is zero at every starting point".into()));
    };
    let polished = optim::bfgs(nll, nll_grad, &simplex.x, &config.optimizer);
    let (theta, polish_ok) = if polished.value <= simplex.value + 1e-10 * (1.0 + simplex.value.abs()) {
        (polished.x.clone(), polished.converged)
    } else {
        (simplex.x.clone(), false)
    };
    let theta = {
        let refined = optim::newton_polish(nll_grad, &theta, 4);
        if nll(&refined) <= nll(&theta) + 1e-9 * (1.0 + simplex.value.abs()) {
            refined
        } else {
            theta
        }
    };

    let (beta_c, sigma, xi) = map_params(&theta);
    let mut beta = beta_c.to_vec();
    beta[0] += threshold;
    let params = EvdParams::new(beta, sigma, xi)
        .map_err(|e| Error::FitFailure(format!("optimizer left the parameter space: {e}")))?;
    let loglik = pp_loglik(&data, &params.beta, params.sigma, params.xi);
    if !loglik.is_finite() {
        return Err(Error::FitFailure("non-finite likelihood at the optimum".into()));
    }

    let centered_params = EvdParams {
        beta: beta_c.to_vec(),
        sigma,
        xi,
    };
    let max_abs_gradient = pp_log_likelihood_gradient(&centered, &centered_params)
        .map(|g| g.iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .unwrap_or(f64::INFINITY);

    let mut diagnostics = FitDiagnostics {
        iterations: simplex.iterations + polished.iterations,
        evaluations: simplex.evaluations + polished.evaluations,
        start: start_index,
        starts_tried: tried,
        max_abs_gradient,
        ..Default::default()
    };
    let mut messages = Vec::new();
    let gradient_ok = max_abs_gradient < 1e-3 * loglik.abs().max(1.0);
    if !gradient_ok {
        messages.push(format!("gradient {max_abs_gradient:.3e} at the optimum"));
    }
    if !simplex.converged && !polish_ok {
        messages.push("simplex search hit the iteration limit".into());
    }
    if xi <= -1.0 {
        messages.push(format!("shape {xi:.3} <= -1: likelihood unbounded near the support edge"));
    }

    let mut covariance = Vec::new();
    if config.compute_covariance {
        let nat = centered_params.to_vec();
        let negll = |v: &[f64]| {
            let n = v.len();
            -pp_loglik(&centered, &v[..n - 2], v[n - 2], v[n - 1])
        };
        match optim::fd_hessian(negll, &nat, config.hessian_step, config.hessian_floor) {
            Some(info) => {
                let est = optim::invert_information(&info);
                diagnostics.pseudo_inverse_covariance = est.pseudo_inverse;
                if est.pseudo_inverse {
                    messages.push("information matrix near-singular; pseudo-inverse used".into());
                }
                let c = est.covariance;
                covariance = (0..c.nrows()).map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect()).collect();
            }
            None => messages.push("Hessian could not be evaluated".into()),
        }
    }

    let converged = gradient_ok && xi > -1.0 && (simplex.converged || polish_ok);
    if !messages.is_empty() {
        diagnostics.message = Some(messages.join("; "));
    }
    let k = params.n_free();
    Ok(FitResult {
        aic: 2.0 * k as f64 - 2.0 * loglik,
        params,
        loglik,
        covariance,
        threshold,
        n_exceedances: m,
        n_total: data.n_total(),
        n_per_year: data.n_per_year(),
        converged,
        covariate_mode: mode,
        diagnostics,
    })
}

/// Starting points in optimizer coordinates `[beta..., log sigma, xi]`,
/// relative to the threshold.
fn starting_points(sample: &FitSample, threshold: f64, mode: CovariateMode) -> Vec<Vec<f64>> {
    let maxima = sample.slot_maxima();
    let n = maxima.len() as f64;
    let mean = maxima.iter().map(|m| m.0).sum::<f64>() / n;
    let var = maxima.iter().map(|m| (m.0 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut sd = var.sqrt();
    if !(sd > 1e-8) {
        let exc: Vec<f64> = sample.values.iter().copied().filter(|&v| v > threshold).collect();
        let em = exc.iter().sum::<f64>() / exc.len().max(1) as f64;
        sd = (em - threshold).abs().max(1e-3);
    }
    let sigma0 = sd * 6f64.sqrt() / std::f64::consts::PI;
    let mu0 = mean - 0.5772 * sigma0 - threshold;

    let mut starts = Vec::new();
    let push = |starts: &mut Vec<Vec<f64>>, b: &[f64], s: f64, xi: f64| {
        let mut v = b.to_vec();
        v.push(s.ln());
        v.push(xi);
        starts.push(v);
    };
    match mode {
        CovariateMode::Stationary => {
            push(&mut starts, &[mu0], sigma0, -0.1);
            push(&mut starts, &[mu0], sigma0, 0.1);
            push(&mut starts, &[mu0], 2.0 * sigma0, -0.1);
        }
        CovariateMode::Linear => {
            // least-squares slope of the annual maxima on the covariate
            let xm = maxima.iter().map(|m| m.1).sum::<f64>() / n;
            let sxx: f64 = maxima.iter().map(|m| (m.1 - xm).powi(2)).sum();
            let sxy: f64 = maxima.iter().map(|m| (m.1 - xm) * (m.0 - mean)).sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            let resid_var = maxima
                .iter()
                .map(|m| (m.0 - mean - slope * (m.1 - xm)).powi(2))
                .sum::<f64>()
                / (n - 2.0).max(1.0);
            let s1 = (resid_var.sqrt() * 6f64.sqrt() / std::f64::consts::PI).max(1e-3);
            let b0 = mean - slope * xm - 0.5772 * s1 - threshold;
            push(&mut starts, &[b0, slope], s1, -0.1);
            push(&mut starts, &[mu0, 0.0], sigma0, -0.1);
            push(&mut starts, &[mu0, 0.0], sigma0, 0.1);
            push(&mut starts, &[mu0, 0.0], 2.0 * sigma0, -0.1);
        }
    }
    starts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AicComparison {
    pub preferred: ModelChoice,
    /// `aic(second) - aic(first)`
    pub delta: f64,
    pub first_aic: f64,
    pub second_aic: f64,
}

/// Compare two fits of the same data by AIC. Ties go to the model with fewer
/// parameters (the first if they have the same count).
pub fn compare_aic(first: &FitResult, second: &FitResult) -> Result<AicComparison> {
    if first.threshold != second.threshold
        || first.n_total != second.n_total
        || first.n_exceedances != second.n_exceedances
    {
        return Err(Error::invalid("AIC comparison needs fits of the same data"));
    }
    let delta = second.aic - first.aic;
    let preferred = if delta > 0.0 {
        ModelChoice::First
    } else if delta < 0.0 {
        ModelChoice::Second
    } else if second.n_free() < first.n_free() {
        ModelChoice::Second
    } else {
        ModelChoice::First
    };
    Ok(AicComparison {
        preferred,
        delta,
        first_aic: first.aic,
        second_aic: second.aic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrlRow {
    pub threshold: f64,
    /// NaN when no value exceeds the threshold.
    #[serde(with = "ext_real")]
    pub mean_excess: f64,
    /// NaN with fewer than two exceedances.
    #[serde(with = "ext_real")]
    pub std_error: f64,
    pub count: usize,
}

impl MrlRow {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrlTable {
    pub rows: Vec<MrlRow>,
}

/// Mean residual life: mean excess over each threshold.
pub fn mean_residual_life(series: &ScenarioSeries, thresholds: &[f64]) -> Result<MrlTable> {
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("thresholds must be strictly increasing"));
    }
    let values: Vec<f64> = series.pooled().collect();
    let rows = thresholds
        .iter()
        .map(|&u| {
            let ex: Vec<f64> = values.iter().filter(|&&x| x > u).map(|x| x - u).collect();
            let count = ex.len();
            let mean = if count == 0 { f64::NAN } else { ex.iter().sum::<f64>() / count as f64 };
            let se = if count < 2 {
                f64::NAN
            } else {
                let var = ex.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
                (var / count as f64).sqrt()
            };
            MrlRow {
                threshold: u,
                mean_excess: mean,
                std_error: se,
                count,
            }
        })
        .collect();
    Ok(MrlTable { rows })
}

/// `n` thresholds evenly spaced between two empirical quantiles.
pub fn mrl_thresholds(series: &ScenarioSeries, q_lo: f64, q_hi: f64, n: usize) -> Result<Vec<f64>> {
    let lo = select_threshold(series, q_lo)?;
    let hi = select_threshold(series, q_hi)?;
    if !(hi > lo) || n < 2 {
        return Err(Error::invalid("degenerate threshold range"));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}
