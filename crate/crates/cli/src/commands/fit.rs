use eventattr::data::Scenario;
use eventattr::fitting::{fit_pp, CovariateMode, FitResult};
use serde::Serialize;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::report::{Cell, Table};

#[derive(Serialize)]
struct FitEntry<'a> {
    series: Scenario,
    fit: &'a FitResult,
}

fn parameter_table(fits: &[(Scenario, FitResult)]) -> Table {
    let trend = fits.iter().any(|(_, f)| f.covariate_mode == CovariateMode::Linear);
    let mut headers = vec!["series", "row"];
    headers.extend(if trend { vec!["beta0", "beta1"] } else { vec!["mu"] });
    headers.extend(["sigma", "xi", "threshold", "exceedances", "loglik", "aic", "converged"]);
    let mut table = Table::new("Point process parameter estimates", &headers);
    for (scenario, fit) in fits {
        let mut location: Vec<Cell> = fit.params.beta.iter().map(|&b| Cell::num(b)).collect();
        if trend && location.len() == 1 {
            location.push(Cell::empty());
        }
        let mut row: Vec<Cell> = vec![scenario.as_str().into(), "estimate".into()];
        row.extend(location);
        row.extend([
            Cell::num(fit.params.sigma),
            Cell::num(fit.params.xi),
            Cell::num(fit.threshold),
            fit.n_exceedances.into(),
            Cell::num(fit.loglik),
            Cell::num(fit.aic),
            Cell::text(fit.converged.to_string()),
        ]);
        table.push(row);

        if let Some(se) = fit.standard_errors() {
            let nb = fit.params.beta.len();
            let mut row: Vec<Cell> = vec![scenario.as_str().into(), "std_error".into()];
            row.extend(se[..nb].iter().map(|&v| Cell::num(v)));
            if trend && nb == 1 {
                row.push(Cell::empty());
            }
            row.extend([Cell::num(se[nb]), Cell::num(se[nb + 1])]);
            row.extend((0..5).map(|_| Cell::empty()));
            table.push(row);
        }
        if let Some(msg) = &fit.diagnostics.message {
            table.note(format!("{scenario}: {msg}"));
        }
    }
    table
}

/// Fit each requested series (all configured ones by default).
pub fn run(ctx: &mut Context, series: &[Scenario]) -> CliResult<()> {
    let wanted: Vec<Scenario> = if series.is_empty() {
        [Scenario::Observation, Scenario::Actual, Scenario::Counterfactual]
            .into_iter()
            .filter(|&s| ctx.config.path_for(s).is_some())
            .collect()
    } else {
        series.to_vec()
    };
    if wanted.is_empty() {
        return Err(CliError::Config("no series configured under [data]".into()));
    }
    let base = ctx.config.fit.attribution();
    let mut fits = Vec::new();
    for scenario in wanted {
        let data = ctx.config.series(scenario)?;
        let fit = fit_pp(&data, &base.fit_for(ctx.config.fit.mode_for(scenario)))
            .map_err(CliError::from)
            .map_err(|e| match e {
                CliError::Fit(m) => CliError::Fit(format!("{scenario}: {m}")),
                other => other,
            })?;
        ctx.out.json(&format!("fit_{scenario}.json"), &fit)?;
        fits.push((scenario, fit));
    }
    let text = ctx.out.table("fit", &parameter_table(&fits))?;
    print!("{text}");
    let entries: Vec<FitEntry> = fits.iter().map(|(s, f)| FitEntry { series: *s, fit: f }).collect();
    ctx.report("fit", entries)
}
