use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{IntervalDiagnostics, IntervalResult, Method};
use crate::attribution::{log_rr_map, AttributionResult};
use crate::error::{Error, Result};
use crate::optim::fd_gradient;

const STEP: f64 = 1e-5;
const STEP_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaDiagnostics {
    /// Standard error of log2 RR.
    pub std_error: f64,
    /// Gradient of the natural-log RR over the actual then counterfactual
    /// parameters.
    pub gradient: Vec<f64>,
    /// Largest relative difference between full- and half-step gradients.
    pub gradient_discrepancy: f64,
    pub pseudo_inverse_covariance: bool,
}

/// Central-difference gradient of `log RR` with respect to the stacked
/// parameters, with step scale `rel`.
pub fn delta_gradient(attr: &AttributionResult, rel: f64) -> Result<Vec<f64>> {
    let theta_a = attr.actual_fit.params.to_vec();
    let theta_c = attr.counterfactual_fit.params.to_vec();
    let na = theta_a.len();
    let x = attr.actual_covariate();
    let mut theta = theta_a;
    theta.extend(theta_c);
    let f = |t: &[f64]| log_rr_map(&t[..na], &t[na..], attr.p_o, &x).unwrap_or(f64::NAN);
    fd_gradient(f, &theta, rel, STEP_FLOOR)
        .ok_or_else(|| Error::MethodInapplicable("log risk ratio is not finite near the estimate".into()))
}

fn block_covariance(attr: &AttributionResult) -> Result<(DMatrix<f64>, bool)> {
    let a = attr.actual_fit.covariance_matrix();
    let c = attr.counterfactual_fit.covariance_matrix();
    let (Some(a), Some(c)) = (a, c) else {
        return Err(Error::MethodInapplicable("fits were run without a covariance estimate".into()));
    };
    let (na, nc) = (a.nrows(), c.nrows());
    let mut m = DMatrix::zeros(na + nc, na + nc);
    m.view_mut((0, 0), (na, na)).copy_from(&a);
    m.view_mut((na, na), (nc, nc)).copy_from(&c);
    let pseudo = attr.actual_fit.diagnostics.pseudo_inverse_covariance
        || attr.counterfactual_fit.diagnostics.pseudo_inverse_covariance;
    Ok((m, pseudo))
}

/// Normal-approximation interval for log2 RR from the fitted covariances.
pub fn delta_interval(attr: &AttributionResult, level: f64) -> Result<IntervalResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if attr.p_c == 0.0 || !attr.log2_rr.is_finite() {
        return Err(Error::MethodInapplicable(
            "counterfactual probability is zero; the risk ratio is unbounded".into(),
        ));
    }
    let (cov, pseudo) = block_covariance(attr)?;
    let g = delta_gradient(attr, STEP)?;
    let g_half = delta_gradient(attr, 0.5 * STEP)?;
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let gradient_discrepancy = g
        .iter()
        .zip(&g_half)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1e-6 * scale))
        .fold(0.0f64, f64::max);

    let gv = DVector::from_column_slice(&g);
    let var = (gv.transpose() * &cov * &gv)[(0, 0)].max(0.0);
    let se = var.sqrt() / LN_2;
    let zq = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + 0.5 * level);
    Ok(IntervalResult {
        method: Method::Delta,
        level,
        estimate: attr.log2_rr,
        lower: attr.log2_rr - zq * se,
        upper: attr.log2_rr + zq * se,
        diagnostics: IntervalDiagnostics::Delta(DeltaDiagnostics {
            std_error: se,
            gradient: g,
            gradient_discrepancy,
            pseudo_inverse_covariance: pseudo,
        }),
    })
}
