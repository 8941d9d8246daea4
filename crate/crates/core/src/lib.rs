//! Extreme event attribution with nonstationary extreme value models.
//!
//! Fits point-process models to observed and simulated series, converts an
//! observed event into an equally rare event in each model scenario, and
//! quantifies the uncertainty of the resulting risk ratio.

pub mod attribution;
pub mod data;
pub mod error;
pub mod evd;
pub mod fitting;
pub mod optim;
pub mod serde_ext;
pub mod uncertainty;

pub use attribution::{
    run_attribution, sensitivity_sweep, AttributionConfig, AttributionResult, EventDefinition, EventSource,
};
pub use data::{Scenario, ScenarioSeries};
pub use error::{Error, Result};
pub use evd::{EvdParams, Gev};
pub use fitting::{fit_pp, CovariateMode, FitConfig, FitResult};
pub use uncertainty::{IntervalResult, Method};
