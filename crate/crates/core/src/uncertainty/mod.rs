//! Confidence intervals for the log2 risk ratio.

mod bootstrap;
mod delta;
mod lrt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::serde_ext::ext_real;

pub use bootstrap::{bootstrap_interval, bootstrap_replicate, BootstrapConfig, BootstrapDiagnostics};
pub use delta::{delta_gradient, delta_interval, DeltaDiagnostics};
pub use lrt::{
    constrained_counterfactual_location, lrt_lower_bound, lrt_statistic, LrtConfig, LrtDiagnostics, LrtEvaluation,
    LrtMode, LrtProblem, LrtSolver,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Delta,
    Bootstrap,
    LrtPcOnly,
    LrtJoint,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Delta => "delta",
            Method::Bootstrap => "bootstrap",
            Method::LrtPcOnly => "lrt_pc_only",
            Method::LrtJoint => "lrt_joint",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delta" => Ok(Method::Delta),
            "bootstrap" => Ok(Method::Bootstrap),
            "lrt_pc_only" | "lrt-pc-only" => Ok(Method::LrtPcOnly),
            "lrt_joint" | "lrt-joint" => Ok(Method::LrtJoint),
            other => Err(crate::Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalDiagnostics {
    Delta(DeltaDiagnostics),
    Bootstrap(BootstrapDiagnostics),
    Lrt(LrtDiagnostics),
}

/// Interval on the log2 risk-ratio scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub method: Method,
    pub level: f64,
    #[serde(with = "ext_real")]
    pub estimate: f64,
    #[serde(with = "ext_real")]
    pub lower: f64,
    #[serde(with = "ext_real")]
    pub upper: f64,
    pub diagnostics: IntervalDiagnostics,
}

impl IntervalResult {
    pub fn contains(&self, log2_rr: f64) -> bool {
        self.lower <= log2_rr && log2_rr <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}
