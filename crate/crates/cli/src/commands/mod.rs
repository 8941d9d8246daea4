mod attribute;
mod diagnose;
mod fit;
mod sensitivity;
mod simulate;
mod uncertainty;

pub use attribute::run as attribute;
pub use diagnose::run as diagnose;
pub use fit::run as fit;
pub use sensitivity::run as sensitivity;
pub use simulate::{run as simulate, SimulateArgs};
pub use uncertainty::run as uncertainty;

use eventattr::data::{Scenario, ScenarioSeries};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::report::{Output, Report};

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub config: RunConfig,
    pub out: Output,
    pub threads: usize,
}

impl Context {
    pub fn report<T: Serialize>(&mut self, command: &str, result: T) -> CliResult<()> {
        let report = Report {
            command,
            config: &self.config,
            threads: self.threads,
            result,
        };
        let name = format!("{command}.json");
        self.out.json(&name, &report)
    }

    pub fn actual_and_counterfactual(&self) -> CliResult<(ScenarioSeries, ScenarioSeries)> {
        Ok((
            self.config.series(Scenario::Actual)?,
            self.config.series(Scenario::Counterfactual)?,
        ))
    }
}
