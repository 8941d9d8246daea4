use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `C(w-1, k) / 2^(w-1)` for window `w`.
    Binomial,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointPolicy {
    /// Mirror about the end sample without repeating it.
    Reflect,
    /// Repeat the end sample.
    Replicate,
}

/// Symmetric moving-average filter for the covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmootherSpec {
    pub window: usize,
    pub weights: WeightRule,
    pub endpoints: EndpointPolicy,
}

impl Default for SmootherSpec {
    fn default() -> Self {
        Self {
            window: 13,
            weights: WeightRule::Binomial,
            endpoints: EndpointPolicy::Reflect,
        }
    }
}

impl SmootherSpec {
    pub fn kernel(&self) -> Result<Vec<f64>> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::invalid(format!("window must be odd, got {}", self.window)));
        }
        let w = self.window;
        Ok(match self.weights {
            WeightRule::Uniform => vec![1.0 / w as f64; w],
            WeightRule::Binomial => {
                let order = w - 1;
                let mut row = vec![1.0f64];
                for _ in 0..order {
                    let mut next = vec![1.0; row.len() + 1];
                    for k in 1..row.len() {
                        next[k] = row[k - 1] + row[k];
                    }
                    row = next;
                }
                let total = 2f64.powi(order as i32);
                row.into_iter().map(|c| c / total).collect()
            }
        })
    }
}

/// Smooth a per-year series; output has the same length as the input.
pub fn smooth_covariate(raw: &[f64], spec: &SmootherSpec) -> Result<Vec<f64>> {
    let kernel = spec.kernel()?;
    let n = raw.len();
    if n < spec.window {
        return Err(Error::invalid(format!(
            "series of length {n} is shorter than the {}-point window",
            spec.window
        )));
    }
    let half = (spec.window / 2) as isize;
    let last = n as isize - 1;
    let index = |i: isize| -> usize {
        let j = match spec.endpoints {
            EndpointPolicy::Reflect => {
                if i < 0 {
                    -i
                } else if i > last {
                    2 * last - i
                } else {
                    i
                }
            }
            EndpointPolicy::Replicate => i.clamp(0, last),
        };
        j as usize
    };
    Ok((0..n as isize)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * raw[index(t + k as isize - half)])
                .sum()
        })
        .collect())
}
