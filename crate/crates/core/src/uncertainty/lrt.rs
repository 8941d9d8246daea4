use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::{IntervalDiagnostics, IntervalResult, Method};
use crate::data::ScenarioSeries;
use crate::error::{Error, Result};
use crate::evd::{pp_loglik, EvdParams, ExceedanceSet, GUMBEL_TOLERANCE};
use crate::fitting::{FitResult, FitSample};
use crate::optim::{self, OptimizerSettings};
use crate::serde_ext::ext_real;

/// Constrained fits stay above this shape; the likelihood is unbounded
/// below it.
const MIN_SHAPE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrtMode {
    /// Actual-scenario parameters fixed at their estimates.
    PcOnly,
    /// Actual and counterfactual parameters both free.
    Joint,
}

impl LrtMode {
    pub fn method(self) -> Method {
        match self {
            LrtMode::PcOnly => Method::LrtPcOnly,
            LrtMode::Joint => Method::LrtJoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrtSolver {
    Bisection,
    GoldenSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrtConfig {
    pub chisq_crit: f64,
    /// Lowest log2 r0 searched.
    pub bracket_floor: f64,
    /// Upper end of the search (log2 scale) when the point estimate is infinite.
    pub bracket_cap: f64,
    pub tolerance: f64,
    pub penalty: f64,
    pub probe_points: usize,
    /// Allowed increase of the statistic between probe points.
    pub monotonicity_slack: f64,
    /// Statistic values below `-negative_tolerance` are an error.
    pub negative_tolerance: f64,
    pub optimizer: OptimizerSettings,
}

impl Default for LrtConfig {
    fn default() -> Self {
        Self {
            chisq_crit: 3.841,
            bracket_floor: -10.0,
            bracket_cap: 60.0,
            tolerance: 1e-3,
            penalty: 1e12,
            probe_points: 5,
            monotonicity_slack: 1e-3,
            negative_tolerance: 1e-6,
            optimizer: OptimizerSettings::default(),
        }
    }
}

impl LrtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.chisq_crit > 0.0) {
            return Err(Error::invalid("critical value must be positive"));
        }
        if !(self.tolerance > 0.0) || !(self.bracket_cap > self.bracket_floor) {
            return Err(Error::invalid("invalid LRT search bracket"));
        }
        Ok(())
    }
}

/// Data and unconstrained estimates for the likelihood ratio test.
#[derive(Debug, Clone)]
pub struct LrtProblem {
    actual: ExceedanceSet,
    counterfactual: ExceedanceSet,
    actual_params: EvdParams,
    counterfactual_params: EvdParams,
    covariate: Vec<f64>,
    loglik_a: f64,
    loglik_c: f64,
}

impl LrtProblem {
    /// `actual_params` and `counterfactual_params` should maximize the
    /// respective likelihoods; `covariate` is the actual-scenario covariate of
    /// the event.
    pub fn new(
        actual: ExceedanceSet,
        counterfactual: ExceedanceSet,
        actual_params: EvdParams,
        counterfactual_params: EvdParams,
        covariate: Vec<f64>,
    ) -> Result<Self> {
        if !counterfactual_params.is_stationary() || counterfactual.n_covariates() != 0 {
            return Err(Error::invalid("counterfactual model must be stationary"));
        }
        if actual.n_covariates() != actual_params.n_covariates() || covariate.len() != actual.n_covariates() {
            return Err(Error::invalid("actual-scenario covariates do not match the parameters"));
        }
        let loglik_a = pp_loglik(&actual, &actual_params.beta, actual_params.sigma, actual_params.xi);
        let loglik_c = pp_loglik(
            &counterfactual,
            &counterfactual_params.beta,
            counterfactual_params.sigma,
            counterfactual_params.xi,
        );
        if !loglik_a.is_finite() || !loglik_c.is_finite() {
            return Err(Error::invalid("estimates have zero likelihood"));
        }
        Ok(Self {
            actual,
            counterfactual,
            actual_params,
            counterfactual_params,
            covariate,
            loglik_a,
            loglik_c,
        })
    }

    pub fn from_series(
        actual: &ScenarioSeries,
        cf: &ScenarioSeries,
        actual_fit: &FitResult,
        cf_fit: &FitResult,
        covariate: Vec<f64>,
    ) -> Result<Self> {
        let a = FitSample::from_series(actual).exceedance_set(actual_fit.threshold, actual_fit.covariate_mode)?;
        let c = FitSample::from_series(cf).exceedance_set(cf_fit.threshold, cf_fit.covariate_mode)?;
        Self::new(a, c, actual_fit.params.clone(), cf_fit.params.clone(), covariate)
    }

    fn z_a(&self, params: &EvdParams, p_a: f64) -> Option<f64> {
        params.at(&self.covariate).ok()?.return_level(p_a).ok()
    }

    /// Point estimate of log2 RR.
    pub fn log2_rr(&self, p_a: f64) -> Result<f64> {
        let z = self
            .z_a(&self.actual_params, p_a)
            .ok_or_else(|| Error::invalid(format!("event probability {p_a} outside (0, 1)")))?;
        let log_p_c = self.counterfactual_params.at(&[])?.log_exceedance_prob(z);
        Ok(crate::attribution::log2_risk_ratio(p_a, log_p_c))
    }
}

/// Counterfactual location for which `z_a` has exceedance probability `p_c`.
pub fn constrained_counterfactual_location(z_a: f64, p_c: f64, sigma: f64, xi: f64) -> f64 {
    let log_y = (-(-p_c).ln_1p()).ln();
    if xi.abs() < GUMBEL_TOLERANCE {
        z_a + sigma * log_y
    } else {
        z_a - sigma / xi * (-xi * log_y).exp_m1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtEvaluation {
    #[serde(with = "ext_real")]
    pub statistic: f64,
    /// Constrained maximum of the log-likelihood in this mode.
    #[serde(with = "ext_real")]
    pub constrained_loglik: f64,
    /// Constrained estimates `[beta_a..., sigma_a, xi_a, mu_c, sigma_c, xi_c]`;
    /// empty when no feasible point was found.
    pub params: Vec<f64>,
    pub evaluations: usize,
}

struct Constrained<'a> {
    problem: &'a LrtProblem,
    p_a: f64,
    p_c: f64,
}

impl Constrained<'_> {
    fn cf_loglik(&self, z_a: f64, log_sigma: f64, xi: f64) -> f64 {
        if xi <= MIN_SHAPE {
            return f64::NEG_INFINITY;
        }
        let sigma = log_sigma.exp();
        let mu = constrained_counterfactual_location(z_a, self.p_c, sigma, xi);
        if !mu.is_finite() {
            return f64::NEG_INFINITY;
        }
        pp_loglik(&self.problem.counterfactual, &[mu], sigma, xi)
    }

    fn pc_only(&self, z_a: f64, v: &[f64]) -> f64 {
        self.cf_loglik(z_a, v[0], v[1])
    }

    fn joint(&self, v: &[f64]) -> f64 {
        let na = v.len() - 2;
        let beta = &v[..na - 2];
        let sigma = v[na - 2].exp();
        let xi = v[na - 1];
        if xi <= MIN_SHAPE {
            return f64::NEG_INFINITY;
        }
        let la = pp_loglik(&self.problem.actual, beta, sigma, xi);
        if !la.is_finite() {
            return f64::NEG_INFINITY;
        }
        let Ok(params) = EvdParams::new(beta.to_vec(), sigma, xi) else {
            return f64::NEG_INFINITY;
        };
        let Some(z_a) = self.problem.z_a(&params, self.p_a) else {
            return f64::NEG_INFINITY;
        };
        la + self.cf_loglik(z_a, v[na], v[na + 1])
    }
}

fn best_start<F: FnMut(&[f64]) -> f64>(f: &mut F, candidates: Vec<Vec<f64>>, keep: usize) -> Vec<Vec<f64>> {
    let mut scored: Vec<(f64, Vec<f64>)> = candidates
        .into_iter()
        .map(|c| (f(&c), c))
        .filter(|(v, _)| v.is_finite())
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().take(keep).map(|(_, c)| c).collect()
}

fn maximize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    starts: &[Vec<f64>],
    steps: &[f64],
    settings: &OptimizerSettings,
) -> Option<(Vec<f64>, f64, usize)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evals = 0;
    for s in starts {
        let m = optim::nelder_mead_restarted(|x| -f(x), s, steps, settings, 4);
        evals += m.evaluations;
        if m.value.is_finite() && best.as_ref().is_none_or(|b| -m.value > b.1) {
            best = Some((m.x, -m.value));
        }
    }
    best.map(|(x, v)| (x, v, evals))
}

fn cf_candidates(sigma: f64, xi: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![sigma.ln(), xi]];
    for s in [1.0, 0.6, 1.5, 2.5] {
        for x in [xi, xi - 0.15, xi + 0.15, -0.4, -0.1, 0.1] {
            out.push(vec![(s * sigma).ln(), x]);
        }
    }
    out
}

/// Likelihood ratio statistic for `RR = 2^log2_r0` at event probability `p_a`.
///
/// `+inf` when no parameter value satisfies the constraint with positive
/// likelihood.
pub fn lrt_statistic(
    problem: &LrtProblem,
    log2_r0: f64,
    p_a: f64,
    mode: LrtMode,
    config: &LrtConfig,
) -> Result<LrtEvaluation> {
    if !(p_a > 0.0 && p_a < 1.0) {
        return Err(Error::invalid(format!("event probability must lie in (0, 1), got {p_a}")));
    }
    let p_c = p_a * (-log2_r0 * LN_2).exp();
    if !(p_c > 0.0 && p_c < 1.0) || !log2_r0.is_finite() {
        return Err(Error::invalid(format!(
            "risk ratio 2^{log2_r0} implies counterfactual probability {p_c} outside (0, 1)"
        )));
    }
    let c = Constrained { problem, p_a, p_c };
    let cf0 = &problem.counterfactual_params;
    let z_hat = problem
        .z_a(&problem.actual_params, p_a)
        .ok_or_else(|| Error::invalid("event magnitude undefined under the actual estimates"))?;

    let pc_steps = [0.2, 0.1];
    let mut pc_f = |v: &[f64]| c.pc_only(z_hat, v);
    let starts = best_start(&mut pc_f, cf_candidates(cf0.sigma, cf0.xi), 2);
    let pc = if starts.is_empty() {
        None
    } else {
        maximize(&mut pc_f, &starts, &pc_steps, &config.optimizer)
    };

    let a_vec = {
        let mut v = problem.actual_params.beta.clone();
        v.push(problem.actual_params.sigma.ln());
        v.push(problem.actual_params.xi);
        v
    };
    let (unconstrained, result) = match mode {
        LrtMode::PcOnly => (problem.loglik_c, pc.map(|(x, v, n)| (a_vec.clone(), x, v, n))),
        LrtMode::Joint => {
            let mut starts = Vec::new();
            if let Some((x, _, _)) = &pc {
                starts.push([a_vec.clone(), x.clone()].concat());
            }
            let mut joint_f = |v: &[f64]| c.joint(v);
            let cands: Vec<Vec<f64>> = cf_candidates(cf0.sigma, cf0.xi)
                .into_iter()
                .map(|cf| [a_vec.clone(), cf].concat())
                .collect();
            for s in best_start(&mut joint_f, cands, 1) {
                if starts.first() != Some(&s) {
                    starts.push(s);
                }
            }
            let scale = problem.actual_params.sigma;
            let mut steps: Vec<f64> = problem.actual_params.beta.iter().map(|_| 0.2 * scale).collect();
            steps.extend([0.1, 0.05, 0.2, 0.1]);
            let base = problem.loglik_a + problem.loglik_c;
            let pc_total = pc.as_ref().map(|(_, v, _)| problem.loglik_a + v);
            let joint = if starts.is_empty() {
                None
            } else {
                maximize(&mut joint_f, &starts, &steps, &config.optimizer)
            };
            let joint = match (joint, pc_total) {
                // the frozen-actual optimum is a feasible joint point
                (Some((_, v, n)), Some(p)) if p > v => {
                    let (px, _, pn) = pc.clone().expect("present");
                    Some(([a_vec.clone(), px].concat(), p, n + pn))
                }
                (Some(j), _) => Some(j),
                (None, Some(p)) => {
                    let (px, _, pn) = pc.clone().expect("present");
                    Some(([a_vec.clone(), px].concat(), p, pn))
                }
                (None, None) => None,
            };
            let split = joint.map(|(x, v, n)| {
                let na = x.len() - 2;
                (x[..na].to_vec(), x[na..].to_vec(), v, n)
            });
            (base, split)
        }
    };

    let Some((a_opt, c_opt, value, evaluations)) = result else {
        return Ok(LrtEvaluation {
            statistic: f64::INFINITY,
            constrained_loglik: f64::NEG_INFINITY,
            params: Vec::new(),
            evaluations: 0,
        });
    };
    let mut statistic = 2.0 * (unconstrained - value);
    if statistic < -config.negative_tolerance * (1.0 + unconstrained.abs()) {
        return Err(Error::InternalConsistency(format!(
            "constrained likelihood {value} exceeds the unconstrained maximum {unconstrained} at log2 r0 = {log2_r0}"
        )));
    }
    statistic = statistic.max(0.0);

    let na = a_opt.len();
    let sigma_a = a_opt[na - 2].exp();
    let a_params = EvdParams::new(a_opt[..na - 2].to_vec(), sigma_a, a_opt[na - 1])?;
    let z = problem.z_a(&a_params, p_a).unwrap_or(f64::NAN);
    let sigma_c = c_opt[0].exp();
    let mu_c = constrained_counterfactual_location(z, p_c, sigma_c, c_opt[1]);
    let mut params = a_params.to_vec();
    params.extend([mu_c, sigma_c, c_opt[1]]);
    Ok(LrtEvaluation {
        statistic,
        constrained_loglik: value,
        params,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtDiagnostics {
    pub mode: LrtMode,
    pub solver: LrtSolver,
    pub bracket: (f64, f64),
    pub critical_value: f64,
    /// `(log2 r0, statistic)` at the probe points.
    pub probe: Vec<(f64, f64)>,
    pub monotone: bool,
    /// Statistic evaluations during the search, probe included.
    pub evaluations: usize,
    /// The bound sits at the bottom of the bracket.
    pub at_bracket_floor: bool,
}

/// One-sided interval `[log2 r0_min, inf)`: the smallest risk ratio not
/// rejected by the likelihood ratio test.
pub fn lrt_lower_bound(problem: &LrtProblem, p_a: f64, mode: LrtMode, config: &LrtConfig) -> Result<IntervalResult> {
    config.validate()?;
    let estimate = problem.log2_rr(p_a)?;
    let crit = config.chisq_crit;
    let lo = config.bracket_floor.max(p_a.log2() + config.tolerance);
    let hi = if estimate.is_finite() { estimate } else { config.bracket_cap };
    let mut evaluations = 0;
    let mut stat = |x: f64| -> Result<f64> {
        evaluations += 1;
        Ok(lrt_statistic(problem, x, p_a, mode, config)?.statistic)
    };

    let finish = |lower: f64, solver, probe, monotone, evaluations, floor| IntervalResult {
        method: mode.method(),
        level: 0.95,
        estimate,
        lower,
        upper: f64::INFINITY,
        diagnostics: IntervalDiagnostics::Lrt(LrtDiagnostics {
            mode,
            solver,
            bracket: (lo, hi),
            critical_value: crit,
            probe,
            monotone,
            evaluations,
            at_bracket_floor: floor,
        }),
    };

    if hi <= lo {
        return Ok(finish(hi, LrtSolver::Bisection, Vec::new(), true, 0, true));
    }
    let k = config.probe_points.max(2);
    let mut probe = Vec::with_capacity(k);
    for i in 0..k {
        let x = lo + (hi - lo) * i as f64 / (k - 1) as f64;
        probe.push((x, stat(x)?));
    }
    let top = probe[k - 1].1;
    if !estimate.is_finite() && top > crit {
        return Err(Error::BracketTooSmall {
            log2_r0: hi,
            statistic: top,
            critical: crit,
        });
    }
    let monotone = probe
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + config.monotonicity_slack || w[1].1 <= crit && w[0].1 <= crit);
    if probe[0].1 <= crit && monotone {
        let n = evaluations;
        return Ok(finish(lo, LrtSolver::Bisection, probe, true, n, true));
    }

    let (lower, solver) = if monotone {
        let (b, _) = optim::bisect_boundary(|x| Ok::<_, Error>(stat(x)? <= crit), lo, hi, config.tolerance)?;
        (b, LrtSolver::Bisection)
    } else {
        let c = config.penalty;
        let (x, _, _) = optim::golden_section(
            |x| {
                let s = stat(x)?;
                Ok::<_, Error>(if s > crit { x + c * (1.0 + hi - x) } else { x })
            },
            lo,
            hi,
            config.tolerance,
        )?;
        (x, LrtSolver::GoldenSection)
    };
    let floor = lower - lo <= config.tolerance;
    Ok(finish(lower, solver, probe, monotone, evaluations, floor))
}
