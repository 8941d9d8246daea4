//! Run configuration read from TOML.
//!
//! ```toml
//! seed = 7
//! output = "results"
//!
//! [data]
//! observation = "observation.csv"
//! actual = "actual.csv"
//! counterfactual = "counterfactual.csv"
//!
//! [data.reference]
//! observation = [1961, 1990]
//!
//! [event]
//! magnitude = 3.1
//! year = 2011
//!
//! [fit]
//! threshold_quantile = 0.8
//! actual_mode = "linear"
//!
//! [uncertainty]
//! methods = ["delta", "bootstrap", "lrt_pc_only", "lrt_joint"]
//!
//! [uncertainty.bootstrap]
//! replicates = 500
//!
//! [sensitivity]
//! p_values = [0.2, 0.1, 0.05]
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use eventattr::attribution::{AttributionConfig, EventDefinition};
use eventattr::data::{compute_anomalies, load_series, smooth_covariate, Scenario, ScenarioSeries, SmootherSpec};
use eventattr::fitting::{CovariateMode, FitConfig};
use eventattr::uncertainty::{BootstrapConfig, LrtConfig, LrtMode, Method};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<EventSection>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub uncertainty: UncertaintySection,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
    #[serde(default)]
    pub diagnose: DiagnoseSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual: Option<PathBuf>,
    /// Anomaly reference window `[first, last]` per scenario.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reference: BTreeMap<String, [i32; 2]>,
    /// Smooth the covariate column of every series that has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoother: Option<SmootherSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

impl EventSection {
    pub fn definition(&self) -> CliResult<EventDefinition> {
        let def = match (self.magnitude, self.probability) {
            (Some(z), None) => EventDefinition::magnitude(z, self.year),
            (None, Some(p)) => EventDefinition::probability(p, self.year),
            _ => {
                return Err(CliError::Config(
                    "[event] needs exactly one of `magnitude` or `probability`".into(),
                ))
            }
        };
        def.validate()?;
        Ok(def)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub threshold_quantile: f64,
    pub observation_mode: CovariateMode,
    pub actual_mode: CovariateMode,
    pub counterfactual_mode: CovariateMode,
}

impl Default for FitSection {
    fn default() -> Self {
        let a = AttributionConfig::default();
        Self {
            threshold_quantile: a.fit.threshold_quantile,
            observation_mode: a.observation_mode,
            actual_mode: a.actual_mode,
            counterfactual_mode: a.counterfactual_mode,
        }
    }
}

impl FitSection {
    pub fn attribution(&self) -> AttributionConfig {
        AttributionConfig {
            fit: FitConfig {
                threshold_quantile: self.threshold_quantile,
                ..FitConfig::default()
            },
            observation_mode: self.observation_mode,
            actual_mode: self.actual_mode,
            counterfactual_mode: self.counterfactual_mode,
        }
    }

    pub fn mode_for(&self, scenario: Scenario) -> CovariateMode {
        match scenario {
            Scenario::Observation => self.observation_mode,
            Scenario::Actual => self.actual_mode,
            Scenario::Counterfactual => self.counterfactual_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySection {
    pub methods: Vec<Method>,
    pub level: f64,
    /// Its `seed` and `level` are replaced by the run seed and `level`.
    pub bootstrap: BootstrapConfig,
    pub lrt: LrtConfig,
}

impl Default for UncertaintySection {
    fn default() -> Self {
        Self {
            methods: vec![Method::Delta, Method::Bootstrap, Method::LrtPcOnly, Method::LrtJoint],
            level: 0.95,
            bootstrap: BootstrapConfig::default(),
            lrt: LrtConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    pub p_values: Vec<f64>,
    pub lrt_mode: LrtMode,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            p_values: vec![0.2, 0.1, 0.05, 0.032, 0.023, 0.01],
            lrt_mode: LrtMode::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Quantile range of the mean residual life thresholds.
    pub mrl_quantiles: [f64; 2],
    pub mrl_points: usize,
    pub cdf_points: usize,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            mrl_quantiles: [0.5, 0.98],
            mrl_points: 40,
            cdf_points: 200,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Read `path` and make relative data and output paths absolute.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve(&base);
        Ok(config)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.data.observation, &mut self.data.actual, &mut self.data.counterfactual]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(p) = self.output.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        for key in self.data.reference.keys() {
            key.parse::<Scenario>()?;
        }
        if self.fit.counterfactual_mode != CovariateMode::Stationary {
            return Err(CliError::Config("the counterfactual fit must be stationary".into()));
        }
        self.fit.attribution().fit.validate()?;
        if let Some(event) = &self.event {
            event.definition()?;
        }
        let u = &self.uncertainty;
        if !(u.level > 0.0 && u.level < 1.0) {
            return Err(CliError::Config(format!("uncertainty level {} outside (0, 1)", u.level)));
        }
        u.bootstrap.validate()?;
        u.lrt.validate()?;
        let d = &self.diagnose;
        if !(0.0 < d.mrl_quantiles[0] && d.mrl_quantiles[0] < d.mrl_quantiles[1] && d.mrl_quantiles[1] < 1.0) {
            return Err(CliError::Config("diagnose.mrl_quantiles must increase within (0, 1)".into()));
        }
        if d.mrl_points < 2 || d.cdf_points < 2 {
            return Err(CliError::Config("diagnose needs at least two points per curve".into()));
        }
        Ok(())
    }

    pub fn event(&self) -> CliResult<EventDefinition> {
        self.event
            .as_ref()
            .ok_or_else(|| CliError::Config("no [event] section".into()))?
            .definition()
    }

    /// The bootstrap follows the run seed and the uncertainty level.
    pub fn sync_bootstrap(&mut self) {
        self.uncertainty.bootstrap.seed = self.seed;
        self.uncertainty.bootstrap.level = self.uncertainty.level;
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            seed: self.seed,
            level: self.uncertainty.level,
            ..self.uncertainty.bootstrap
        }
    }

    pub fn path_for(&self, scenario: Scenario) -> Option<&Path> {
        match scenario {
            Scenario::Observation => self.data.observation.as_deref(),
            Scenario::Actual => self.data.actual.as_deref(),
            Scenario::Counterfactual => self.data.counterfactual.as_deref(),
        }
    }

    /// Load one series and apply the configured anomaly window and smoother.
    pub fn series(&self, scenario: Scenario) -> CliResult<ScenarioSeries> {
        let path = self
            .path_for(scenario)
            .ok_or_else(|| CliError::Config(format!("no path for the {scenario} series under [data]")))?;
        if !path.exists() {
            return Err(CliError::Config(format!("{scenario} series {} does not exist", path.display())));
        }
        let mut series = load_series(path, scenario)?;
        if let Some(&[first, last]) = self.data.reference.get(scenario.as_str()) {
            series = compute_anomalies(&series, first, last)?;
        }
        if let (Some(spec), Some(raw)) = (&self.data.smoother, series.covariate()) {
            let smooth = smooth_covariate(raw, spec)?;
            series = series.with_covariate(Some(smooth))?;
        }
        Ok(series)
    }
}
