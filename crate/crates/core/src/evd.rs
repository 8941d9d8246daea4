//! Closed-form extreme-value mathematics.
//!
//! The GEV distribution is parameterized by location `mu`, scale `sigma` and
//! shape `xi`. Its location may depend linearly on covariates,
//! `mu(x) = beta_0 + sum_k beta_k x_k`. The point-process (PP) likelihood for
//! threshold exceedances is expressed directly in these GEV parameters, so the
//! same parameters give return levels and exceedance probabilities.
//!
//! Brackets `[1 + xi (z - mu) / sigma]_+` are clamped at zero. With `xi < 0`
//! a value at or above the upper support bound has exceedance probability
//! exactly `0`; with `xi > 0` a value at or below the lower bound has
//! exceedance probability exactly `1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shapes with `|xi|` below this use the `xi -> 0` (Gumbel) limit formulas.
pub const GUMBEL_TOLERANCE: f64 = 1e-8;

/// Location coefficients, scale and shape of a GEV / PP model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvdParams {
    /// `beta[0]` is the intercept; `beta[1..]` are covariate slopes.
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub xi: f64,
}

impl EvdParams {
    pub fn new(beta: Vec<f64>, sigma: f64, xi: f64) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::invalid("location needs at least an intercept"));
        }
        if beta.iter().any(|b| !b.is_finite()) || !xi.is_finite() {
            return Err(Error::invalid("parameters must be finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {sigma}")));
        }
        Ok(Self { beta, sigma, xi })
    }

    pub fn stationary(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        Self::new(vec![mu], sigma, xi)
    }

    /// Number of covariates `K`.
    pub fn n_covariates(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn is_stationary(&self) -> bool {
        self.beta.len() == 1
    }

    /// Number of free parameters (`K + 3`).
    pub fn n_free(&self) -> usize {
        self.beta.len() + 2
    }

    /// Location at covariate vector `x`. The caller guarantees `x.len() == K`.
    pub fn location(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_covariates());
        self.beta[0]
            + self.beta[1..]
                .iter()
                .zip(x)
                .map(|(b, xk)| b * xk)
                .sum::<f64>()
    }

    /// The GEV at covariate `x`.
    pub fn at(&self, x: &[f64]) -> Result<Gev> {
        if x.len() != self.n_covariates() {
            return Err(Error::invalid(format!(
                "expected {} covariate values, got {}",
                self.n_covariates(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariate values must be finite"));
        }
        Ok(Gev {
            mu: self.location(x),
            sigma: self.sigma,
            xi: self.xi,
        })
    }

    /// Parameters flattened as `[beta..., sigma, xi]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma);
        v.push(self.xi);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 3 {
            return Err(Error::invalid("need at least three parameters"));
        }
        let n = v.len();
        Self::new(v[..n - 2].to_vec(), v[n - 2], v[n - 1])
    }

    /// Names matching [`EvdParams::to_vec`] order.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.beta.len()).map(|k| format!("beta{k}")).collect();
        names.push("sigma".into());
        names.push("xi".into());
        names
    }
}

/// Support of a GEV distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lower: f64,
    pub upper: f64,
}

impl Support {
    pub fn contains(&self, z: f64) -> bool {
        z >= self.lower && z <= self.upper
    }
}

/// A GEV distribution with fixed location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gev {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl Gev {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        EvdParams::stationary(mu, sigma, xi)?;
        Ok(Self { mu, sigma, xi })
    }

    fn is_gumbel(&self) -> bool {
        self.xi.abs() < GUMBEL_TOLERANCE
    }

    /// `log t(z)` where `t(z) = [1 + xi (z - mu)/sigma]_+^(-1/xi) = -log G(z)`.
    ///
    /// Returns `-inf` beyond a finite upper bound and `+inf` below a finite
    /// lower bound.
    pub fn log_reduced(&self, z: f64) -> f64 {
        let w = (z - self.mu) / self.sigma;
        if self.is_gumbel() {
            return -w;
        }
        let b = self.xi * w;
        let edge = self.mu - self.sigma / self.xi;
        if b <= -1.0 || (self.xi < 0.0 && z >= edge) || (self.xi > 0.0 && z <= edge) {
            return if self.xi < 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
        }
        -b.ln_1p() / self.xi
    }

    pub fn cdf(&self, z: f64) -> f64 {
        (-self.log_reduced(z).exp()).exp()
    }

    /// `P(Z > z)`.
    pub fn exceedance_prob(&self, z: f64) -> f64 {
        -(-self.log_reduced(z).exp()).exp_m1()
    }

    /// `log P(Z > z)`, accurate where the probability itself underflows.
    pub fn log_exceedance_prob(&self, z: f64) -> f64 {
        let log_t = self.log_reduced(z);
        if log_t == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let t = log_t.exp();
        if t > 1e-8 {
            (-(-t).exp_m1()).ln()
        } else {
            // log(1 - exp(-t)) = log t - t/2 + O(t^2)
            log_t - 0.5 * t
        }
    }

    /// Level exceeded with probability `p`.
    pub fn return_level(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
        }
        Ok(self.level_from_reduced(-(-p).ln_1p()))
    }

    /// Quantile function, `G^{-1}(f)`.
    pub fn quantile(&self, f: f64) -> Result<f64> {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid(format!("probability must lie in (0, 1), got {f}")));
        }
        Ok(self.level_from_reduced(-f.ln()))
    }

    // z with t(z) = y
    fn level_from_reduced(&self, y: f64) -> f64 {
        let ly = y.ln();
        if self.is_gumbel() {
            self.mu - self.sigma * ly
        } else {
            self.mu + self.sigma / self.xi * (-self.xi * ly).exp_m1()
        }
    }

    pub fn support(&self) -> Support {
        if self.xi < 0.0 {
            Support {
                lower: f64::NEG_INFINITY,
                upper: self.mu - self.sigma / self.xi,
            }
        } else if self.xi > 0.0 {
            Support {
                lower: self.mu - self.sigma / self.xi,
                upper: f64::INFINITY,
            }
        } else {
            Support {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            }
        }
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return self.level_from_reduced(-u.ln());
            }
        }
    }

    /// Distribution of the maximum of `m` independent draws.
    pub fn block_maximum(&self, m: usize) -> Gev {
        let lm = (m as f64).ln();
        if self.is_gumbel() {
            return Gev {
                mu: self.mu + self.sigma * lm,
                ..*self
            };
        }
        let scale = (self.xi * lm).exp();
        Gev {
            mu: self.mu + self.sigma * (self.xi * lm).exp_m1() / self.xi,
            sigma: self.sigma * scale,
            xi: self.xi,
        }
    }

    /// Inverse of [`Gev::block_maximum`]: the per-draw distribution whose
    /// `m`-block maximum is `self`.
    pub fn block_component(&self, m: usize) -> Gev {
        let lm = (m as f64).ln();
        if self.is_gumbel() {
            return Gev {
                mu: self.mu - self.sigma * lm,
                ..*self
            };
        }
        let sigma = self.sigma * (-self.xi * lm).exp();
        Gev {
            mu: self.mu - sigma * (self.xi * lm).exp_m1() / self.xi,
            sigma,
            xi: self.xi,
        }
    }
}

fn check_finite(z: f64) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("value must be finite, got {z}")))
    }
}

/// `P(Z > z)` under the GEV at covariate `x`.
pub fn gev_exceedance_prob(z: f64, params: &EvdParams, x: &[f64]) -> Result<f64> {
    check_finite(z)?;
    Ok(params.at(x)?.exceedance_prob(z))
}

/// `log P(Z > z)`; stays finite when the probability is below `f64` range.
pub fn gev_log_exceedance_prob(z: f64, params: &EvdParams, x: &[f64]) -> Result<f64> {
    check_finite(z)?;
    Ok(params.at(x)?.log_exceedance_prob(z))
}

pub fn gev_return_level(p: f64, params: &EvdParams, x: &[f64]) -> Result<f64> {
    params.at(x)?.return_level(p)
}

pub fn support_bounds(params: &EvdParams, x: &[f64]) -> Result<Support> {
    Ok(params.at(x)?.support())
}

/// Conditional exceedance CDF `P(X <= x | X > u)` of the generalized Pareto
/// approximation.
pub fn gpd_exceedance_cdf(x: f64, u: f64, sigma_u: f64, xi: f64) -> Result<f64> {
    check_finite(x)?;
    if !(x > u) {
        return Err(Error::invalid(format!("value {x} must exceed threshold {u}")));
    }
    if !(sigma_u > 0.0) {
        return Err(Error::invalid("GPD scale must be positive"));
    }
    let w = (x - u) / sigma_u;
    if xi.abs() < GUMBEL_TOLERANCE {
        return Ok(-(-w).exp_m1());
    }
    let b = xi * w;
    if b <= -1.0 {
        return Ok(1.0);
    }
    Ok(-(-b.ln_1p() / xi).exp_m1())
}

/// One observation above the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Exceedance {
    pub value: f64,
    pub covariate: Vec<f64>,
    pub year_index: usize,
}

/// A group of `count` observations sharing one covariate vector; used for the
/// intensity term, which runs over every observation (not only exceedances).
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityBlock {
    pub covariate: Vec<f64>,
    pub count: usize,
}

/// Threshold exceedances plus the bookkeeping the PP likelihood needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceSet {
    threshold: f64,
    exceedances: Vec<Exceedance>,
    blocks: Vec<IntensityBlock>,
    n_total: usize,
    n_per_year: usize,
}

impl ExceedanceSet {
    pub fn new(
        threshold: f64,
        exceedances: Vec<Exceedance>,
        blocks: Vec<IntensityBlock>,
        n_per_year: usize,
    ) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::invalid("threshold must be finite"));
        }
        if n_per_year == 0 {
            return Err(Error::invalid("need at least one observation per year"));
        }
        let n_total: usize = blocks.iter().map(|b| b.count).sum();
        if n_total % n_per_year != 0 {
            return Err(Error::invalid(format!(
                "{n_total} observations do not split into years of {n_per_year}"
            )));
        }
        if exceedances.len() > n_total {
            return Err(Error::invalid("more exceedances than observations"));
        }
        if let Some(e) = exceedances.iter().find(|e| !(e.value > threshold)) {
            return Err(Error::invalid(format!(
                "exceedance {} is not above threshold {threshold}",
                e.value
            )));
        }
        let k = blocks.first().map(|b| b.covariate.len()).unwrap_or(0);
        if blocks.iter().any(|b| b.covariate.len() != k)
            || exceedances.iter().any(|e| e.covariate.len() != k)
        {
            return Err(Error::invalid("inconsistent covariate dimension"));
        }
        Ok(Self {
            threshold,
            exceedances,
            blocks,
            n_total,
            n_per_year,
        })
    }

    /// Stationary data: only the exceedance values and the total count matter.
    pub fn stationary(
        threshold: f64,
        values: &[f64],
        n_total: usize,
        n_per_year: usize,
    ) -> Result<Self> {
        let exceedances = values
            .iter()
            .map(|&value| Exceedance {
                value,
                covariate: Vec::new(),
                year_index: 0,
            })
            .collect();
        let blocks = vec![IntensityBlock {
            covariate: Vec::new(),
            count: n_total,
        }];
        Self::new(threshold, exceedances, blocks, n_per_year)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn exceedances(&self) -> &[Exceedance] {
        &self.exceedances
    }

    pub fn blocks(&self) -> &[IntensityBlock] {
        &self.blocks
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_per_year(&self) -> usize {
        self.n_per_year
    }

    pub fn n_covariates(&self) -> usize {
        self.blocks.first().map(|b| b.covariate.len()).unwrap_or(0)
    }

    /// Copy with every value (and the threshold) shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.threshold += c;
        for e in &mut out.exceedances {
            e.value += c;
        }
        out
    }
}

/// PP log-likelihood with covariate-dependent location.
///
/// `-inf` signals zero likelihood (an exceedance outside the support, or an
/// infinite intensity with `xi > 0`).
pub fn pp_log_likelihood(data: &ExceedanceSet, params: &EvdParams) -> Result<f64> {
    if data.n_covariates() != params.n_covariates() {
        return Err(Error::invalid(format!(
            "data has {} covariates, parameters expect {}",
            data.n_covariates(),
            params.n_covariates()
        )));
    }
    Ok(pp_loglik(data, &params.beta, params.sigma, params.xi))
}

pub(crate) fn pp_loglik(data: &ExceedanceSet, beta: &[f64], sigma: f64, xi: f64) -> f64 {
    if !(sigma > 0.0) || !sigma.is_finite() || !xi.is_finite() {
        return f64::NEG_INFINITY;
    }
    let loc = |x: &[f64]| beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
    let gumbel = xi.abs() < GUMBEL_TOLERANCE;
    let u = data.threshold;

    let mut intensity = 0.0;
    for block in &data.blocks {
        let w = (u - loc(&block.covariate)) / sigma;
        let log_t = if gumbel {
            -w
        } else {
            let b = xi * w;
            if b <= -1.0 {
                if xi > 0.0 {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            -b.ln_1p() / xi
        };
        intensity += block.count as f64 * log_t.exp();
    }
    let mut ll = -intensity / data.n_per_year as f64;

    let log_sigma = sigma.ln();
    for e in &data.exceedances {
        let w = (e.value - loc(&e.covariate)) / sigma;
        let term = if gumbel {
            -w
        } else {
            let b = xi * w;
            if b <= -1.0 {
                return f64::NEG_INFINITY;
            }
            -(1.0 / xi + 1.0) * b.ln_1p()
        };
        ll += term - log_sigma;
    }
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Gradient of [`pp_log_likelihood`] with respect to `[beta..., sigma, xi]`.
///
/// `None` when the likelihood is zero at `params`.
pub fn pp_log_likelihood_gradient(data: &ExceedanceSet, params: &EvdParams) -> Option<Vec<f64>> {
    let (beta, sigma, xi) = (&params.beta, params.sigma, params.xi);
    if !pp_loglik(data, beta, sigma, xi).is_finite() {
        return None;
    }
    let nb = beta.len();
    let mut grad = vec![0.0; nb + 2];

    if xi.abs() < 1e-6 {
        // The xi-derivative of the closed form loses precision here; the
        // likelihood is smooth through zero, so difference across it.
        let h = 1e-5;
        let f = |x: f64| pp_loglik(data, beta, sigma, x);
        grad[nb + 1] = (f(xi + h) - f(xi - h)) / (2.0 * h);
        let (ld, lds) = pp_grad_location_scale_gumbel(data, beta, sigma);
        grad[..nb].copy_from_slice(&ld);
        grad[nb] = lds;
        return Some(grad);
    }

    let loc = |x: &[f64]| beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
    let u = data.threshold;
    let ny = data.n_per_year as f64;
    let add_mu = |grad: &mut [f64], x: &[f64], d: f64| {
        grad[0] += d;
        for (g, xk) in grad[1..nb].iter_mut().zip(x) {
            *g += d * xk;
        }
    };

    for block in &data.blocks {
        let dm = u - loc(&block.covariate);
        let t = 1.0 + xi * dm / sigma;
        if t <= 0.0 {
            continue;
        }
        let lt = t.ln();
        let intensity = block.count as f64 * (-lt / xi).exp();
        let c = -intensity / ny;
        add_mu(&mut grad, &block.covariate, c / (sigma * t));
        grad[nb] += c * dm / (sigma * sigma * t);
        grad[nb + 1] += c * (lt / (xi * xi) - dm / (xi * sigma * t));
    }
    for e in &data.exceedances {
        let dm = e.value - loc(&e.covariate);
        let s = 1.0 + xi * dm / sigma;
        add_mu(&mut grad, &e.covariate, (1.0 + xi) / (sigma * s));
        grad[nb] += -1.0 / sigma + (1.0 + xi) * dm / (sigma * sigma * s);
        grad[nb + 1] += s.ln() / (xi * xi) - (1.0 / xi + 1.0) * dm / (sigma * s);
    }
    Some(grad)
}

fn pp_grad_location_scale_gumbel(data: &ExceedanceSet, beta: &[f64], sigma: f64) -> (Vec<f64>, f64) {
    let nb = beta.len();
    let loc = |x: &[f64]| beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
    let ny = data.n_per_year as f64;
    let mut g = vec![0.0; nb];
    let mut gs = 0.0;
    let mut add = |x: &[f64], d: f64| {
        g[0] += d;
        for (gk, xk) in g[1..].iter_mut().zip(x) {
            *gk += d * xk;
        }
    };
    for block in &data.blocks {
        let dm = data.threshold - loc(&block.covariate);
        let c = -(block.count as f64) * (-dm / sigma).exp() / ny;
        add(&block.covariate, c / sigma);
        gs += c * dm / (sigma * sigma);
    }
    for e in &data.exceedances {
        let dm = e.value - loc(&e.covariate);
        add(&e.covariate, 1.0 / sigma);
        gs += -1.0 / sigma + dm / (sigma * sigma);
    }
    (g, gs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stat(mu: f64, sigma: f64, xi: f64) -> EvdParams {
        EvdParams::stationary(mu, sigma, xi).unwrap()
    }

    #[test]
    fn exceedance_at_location_is_one_minus_inv_e() {
        let p = gev_exceedance_prob(0.7, &stat(0.7, 2.0, 0.5), &[]).unwrap();
        assert_relative_eq!(p, 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn table_one_counterfactual_probability() {
        let p = gev_exceedance_prob(4.842, &stat(1.415, 0.638, -0.179), &[]).unwrap();
        assert!(p > 1.503e-8 / 1.5 && p < 1.503e-8 * 1.5, "p = {p:e}");
    }

    #[test]
    fn upper_bound_has_zero_exceedance() {
        let p = stat(0.0, 1.0, -0.5);
        assert_eq!(gev_exceedance_prob(2.0, &p, &[]).unwrap(), 0.0);
        assert_eq!(gev_exceedance_prob(7.0, &p, &[]).unwrap(), 0.0);
        assert_eq!(gev_log_exceedance_prob(2.0, &p, &[]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn below_lower_bound_exceedance_is_one() {
        let p = stat(0.0, 1.0, 0.5);
        assert_eq!(gev_exceedance_prob(-2.0, &p, &[]).unwrap(), 1.0);
        assert_eq!(gev_exceedance_prob(-5.0, &p, &[]).unwrap(), 1.0);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert!(gev_exceedance_prob(f64::NAN, &stat(0.0, 1.0, 0.1), &[]).is_err());
        let ns = EvdParams::new(vec![0.0, 1.0], 1.0, 0.1).unwrap();
        assert!(gev_exceedance_prob(1.0, &ns, &[f64::INFINITY]).is_err());
        assert!(gev_exceedance_prob(1.0, &ns, &[]).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(EvdParams::stationary(0.0, 0.0, 0.1).is_err());
        assert!(EvdParams::stationary(0.0, -1.0, 0.1).is_err());
        assert!(EvdParams::new(vec![], 1.0, 0.1).is_err());
    }

    #[test]
    fn return_level_examples() {
        let any = stat(0.3, 1.7, -0.2);
        let z = gev_return_level(-(-1.0f64).exp_m1(), &any, &[]).unwrap();
        assert_relative_eq!(z, 0.3, epsilon = 1e-12);

        // Independent check: bisection on the exceedance function.
        let g = stat(0.0, 1.0, 0.0);
        let (mut lo, mut hi) = (0.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gev_exceedance_prob(mid, &g, &[]).unwrap() > 0.01 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = gev_return_level(0.01, &g, &[]).unwrap();
        assert_relative_eq!(z, 0.5 * (lo + hi), epsilon = 1e-9);
        assert_relative_eq!(z, 4.600149, epsilon = 1e-6);

        let z = gev_return_level(1.503e-8, &stat(1.415, 0.638, -0.179), &[]).unwrap();
        assert!((z - 4.842).abs() < 0.02, "z = {z}");

        assert!(gev_return_level(0.0, &g, &[]).is_err());
        assert!(gev_return_level(1.0, &g, &[]).is_err());
    }

    #[test]
    fn support_examples() {
        let s = support_bounds(&stat(0.0, 1.0, -0.5), &[]).unwrap();
        assert_eq!(s.upper, 2.0);
        assert_eq!(s.lower, f64::NEG_INFINITY);
        let s = support_bounds(&stat(0.0, 1.0, 0.0), &[]).unwrap();
        assert_eq!(s.upper, f64::INFINITY);
        let s = support_bounds(&stat(1.415, 0.638, -0.179), &[]).unwrap();
        assert!((s.upper - 4.979).abs() < 1e-3, "upper = {}", s.upper);
        let s = support_bounds(&stat(0.0, 1.0, 0.25), &[]).unwrap();
        assert_eq!(s.lower, -4.0);
    }

    #[test]
    fn gpd_examples() {
        let c = gpd_exceedance_cdf(3.0, 2.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(c, 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(gpd_exceedance_cdf(4.0, 2.0, 1.0, -0.5).unwrap(), 1.0);
        assert_relative_eq!(gpd_exceedance_cdf(1.0, 0.0, 1.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(gpd_exceedance_cdf(1.0, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn gpd_cdf_matches_integrated_density() {
        // Simpson's rule on the GPD density for xi = 1, sigma = 1.
        let dens = |y: f64| (1.0 + y).powf(-2.0);
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut s = dens(0.0) + dens(1.0);
        for i in 1..n {
            s += dens(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = s * h / 3.0;
        let c = gpd_exceedance_cdf(1.0, 0.0, 1.0, 1.0).unwrap();
        assert!((integral - c).abs() < 1e-10);
    }

    #[test]
    fn pp_likelihood_no_exceedances() {
        let data = ExceedanceSet::stationary(0.4, &[], 5, 5).unwrap();
        let ll = pp_log_likelihood(&data, &stat(0.4, 1.0, 0.5)).unwrap();
        assert_relative_eq!(ll, -1.0, epsilon = 1e-15);
    }

    fn literal_pp_loglik(x: &[f64], u: f64, n: f64, ny: f64, mu: f64, sigma: f64, xi: f64) -> f64 {
        let bracket = |v: f64| 1.0 + xi * (v - mu) / sigma;
        let mut l = (-(n / ny) * bracket(u).powf(-1.0 / xi)).exp();
        for &xi_val in x {
            l *= bracket(xi_val).powf(-1.0 / xi - 1.0) / sigma;
        }
        l.ln()
    }

    #[test]
    fn pp_likelihood_single_exceedance_matches_literal_formula() {
        let data = ExceedanceSet::stationary(0.5, &[1.0], 10, 1).unwrap();
        let ll = pp_log_likelihood(&data, &stat(0.0, 1.0, 0.1)).unwrap();
        let lit = literal_pp_loglik(&[1.0], 0.5, 10.0, 1.0, 0.0, 1.0, 0.1);
        assert_relative_eq!(ll, lit, epsilon = 1e-12);
    }

    #[test]
    fn pp_likelihood_outside_support_is_neg_inf() {
        let data = ExceedanceSet::stationary(0.5, &[1.0, 2.5], 10, 1).unwrap();
        let ll = pp_log_likelihood(&data, &stat(0.0, 1.0, -0.5)).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn stationary_collapse_matches_literal() {
        let xs = [1.1, 1.3, 1.8, 2.2, 1.05];
        let data = ExceedanceSet::stationary(1.0, &xs, 60, 12).unwrap();
        for &(mu, sigma, xi) in &[(0.8, 0.6, -0.2), (1.2, 0.9, 0.15), (0.5, 1.4, -0.05)] {
            let ll = pp_log_likelihood(&data, &stat(mu, sigma, xi)).unwrap();
            let lit = literal_pp_loglik(&xs, 1.0, 60.0, 12.0, mu, sigma, xi);
            assert!((ll - lit).abs() < 1e-12, "{ll} vs {lit}");
        }
    }

    #[test]
    fn nonstationary_with_zero_slope_equals_stationary() {
        let xs = [1.1, 1.3, 1.8];
        let stat_data = ExceedanceSet::stationary(1.0, &xs, 6, 2).unwrap();
        let exc = xs
            .iter()
            .enumerate()
            .map(|(i, &v)| Exceedance {
                value: v,
                covariate: vec![i as f64],
                year_index: i,
            })
            .collect();
        let blocks = (0..3)
            .map(|i| IntensityBlock {
                covariate: vec![i as f64],
                count: 2,
            })
            .collect();
        let ns_data = ExceedanceSet::new(1.0, exc, blocks, 2).unwrap();
        let a = pp_log_likelihood(&stat_data, &stat(0.9, 0.7, -0.1)).unwrap();
        let b = pp_log_likelihood(&ns_data, &EvdParams::new(vec![0.9, 0.0], 0.7, -0.1).unwrap())
            .unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn exceedance_set_invariants() {
        assert!(ExceedanceSet::stationary(1.0, &[0.5], 10, 1).is_err());
        assert!(ExceedanceSet::stationary(1.0, &[1.5], 10, 3).is_err());
        assert!(ExceedanceSet::stationary(1.0, &[1.5, 2.0], 1, 1).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let exc = [1.2, 1.5, 2.1, 1.9, 1.35]
            .iter()
            .enumerate()
            .map(|(i, &v)| Exceedance {
                value: v,
                covariate: vec![0.1 * i as f64],
                year_index: i,
            })
            .collect();
        let blocks = (0..5)
            .map(|i| IntensityBlock {
                covariate: vec![0.1 * i as f64],
                count: 4,
            })
            .collect();
        let data = ExceedanceSet::new(1.1, exc, blocks, 4).unwrap();
        for &xi in &[-0.2, 0.3, 1e-9, 2e-7] {
            let p = EvdParams::new(vec![0.9, 0.4], 0.6, xi).unwrap();
            let g = pp_log_likelihood_gradient(&data, &p).unwrap();
            let v = p.to_vec();
            for i in 0..v.len() {
                let h = 1e-6;
                let mut a = v.clone();
                let mut b = v.clone();
                a[i] += h;
                b[i] -= h;
                let fa = pp_log_likelihood(&data, &EvdParams::from_slice(&a).unwrap()).unwrap();
                let fb = pp_log_likelihood(&data, &EvdParams::from_slice(&b).unwrap()).unwrap();
                let fd = (fa - fb) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "xi={xi} i={i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn block_maximum_round_trip() {
        for &xi in &[-0.2, 0.0, 0.3] {
            let g = Gev::new(1.0, 0.7, xi).unwrap();
            let b = g.block_maximum(12).block_component(12);
            assert_relative_eq!(b.mu, g.mu, epsilon = 1e-12);
            assert_relative_eq!(b.sigma, g.sigma, epsilon = 1e-12);
            // CDF of the max is the 12th power of the component CDF.
            let z = 2.0;
            assert_relative_eq!(g.block_maximum(12).cdf(z), g.cdf(z).powi(12), epsilon = 1e-12);
        }
    }

    #[test]
    fn monte_carlo_exceedance_frequencies() {
        let g = Gev::new(1.4, 0.64, -0.18).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
        for &p in &[0.1, 0.01] {
            let z = g.return_level(p).unwrap();
            let freq = draws.iter().filter(|&&d| d > z).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * se, "p={p} freq={freq}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn return_level_round_trip(
                xi_idx in 0usize..5,
                log_p in (1e-8f64).ln()..(0.5f64).ln(),
                mu in -3.0f64..3.0,
                sigma in 0.1f64..3.0,
            ) {
                let xi = [-0.4, -0.2, 0.0, 0.2, 0.4][xi_idx];
                let p = log_p.exp();
                let par = stat(mu, sigma, xi);
                let z = gev_return_level(p, &par, &[]).unwrap();
                let back = gev_exceedance_prob(z, &par, &[]).unwrap();
                prop_assert!(((back - p) / p).abs() < 1e-10);
            }

            #[test]
            fn gumbel_continuity(z in -5.0f64..15.0) {
                let g = stat(0.0, 1.0, 0.0);
                let p0 = gev_exceedance_prob(z, &g, &[]).unwrap();
                for xi in [1e-9, -1e-9] {
                    let p = gev_exceedance_prob(z, &stat(0.0, 1.0, xi), &[]).unwrap();
                    prop_assert!((p - p0).abs() < 1e-6);
                }
                // Just outside the switch the closed form must agree too.
                for xi in [2e-8, -2e-8] {
                    let p = gev_exceedance_prob(z, &stat(0.0, 1.0, xi), &[]).unwrap();
                    prop_assert!((p - p0).abs() < 1e-6);
                }
            }

            #[test]
            fn exceedance_monotone_in_z(z in -4.0f64..6.0, dz in 0.0f64..2.0, xi in -0.6f64..0.6) {
                let g = stat(0.0, 1.0, xi);
                let a = gev_exceedance_prob(z, &g, &[]).unwrap();
                let b = gev_exceedance_prob(z + dz, &g, &[]).unwrap();
                prop_assert!(b <= a);
            }

            #[test]
            fn return_level_monotone_in_p(p in 1e-6f64..0.9, dp in 0.0f64..0.09, xi in -0.6f64..0.6) {
                let g = stat(0.0, 1.0, xi);
                let a = gev_return_level(p, &g, &[]).unwrap();
                let b = gev_return_level(p + dp, &g, &[]).unwrap();
                prop_assert!(b <= a);
            }
        }
    }
}
