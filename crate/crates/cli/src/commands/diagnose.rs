use eventattr::data::{Scenario, ScenarioSeries};
use eventattr::evd::Gev;
use eventattr::fitting::{compare_aic, fit_pp, mean_residual_life, mrl_thresholds, CovariateMode, FitResult, MrlTable};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::Context;
use crate::error::{CliError, CliResult};
use crate::report::{Cell, Table};

#[derive(Serialize)]
struct SeriesDiagnostics {
    series: Scenario,
    mrl: MrlTable,
    fit: FitResult,
    /// Covariate at which the CDF curve is evaluated.
    covariate: Option<f64>,
    #[serde(with = "eventattr::serde_ext::ext_real")]
    upper_bound: f64,
    aic_stationary: Option<f64>,
    aic_linear: Option<f64>,
}

fn mrl_table(mrl: &MrlTable) -> Table {
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.975);
    let mut t = Table::new("", &["threshold", "mean_excess", "lower", "upper", "std_error", "count"]);
    for r in &mrl.rows {
        t.push(vec![
            Cell::num(r.threshold),
            Cell::num(r.mean_excess),
            Cell::num(r.mean_excess - z * r.std_error),
            Cell::num(r.mean_excess + z * r.std_error),
            Cell::num(r.std_error),
            r.count.into(),
        ]);
    }
    t
}

/// Fitted CDF sampled from a low quantile to the upper support bound (or a
/// high quantile when the tail is unbounded); the bound row is marked.
fn cdf_table(g: &Gev, points: usize) -> CliResult<Table> {
    let lo = g.quantile(1e-3)?;
    let ub = g.support().upper;
    let hi = if ub.is_finite() { ub } else { g.quantile(1.0 - 1e-4)? };
    let mut t = Table::new("", &["z", "cdf", "marker"]);
    for i in 0..points {
        let z = if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
        let marker = if i + 1 == points && ub.is_finite() { "upper_bound" } else { "" };
        t.push(vec![Cell::num(z), Cell::num(g.cdf(z)), marker.into()]);
    }
    Ok(t)
}

fn covariate_for(ctx: &Context, series: &ScenarioSeries, mode: CovariateMode) -> CliResult<Option<f64>> {
    if mode == CovariateMode::Stationary {
        return Ok(None);
    }
    let year = ctx
        .config
        .event
        .as_ref()
        .and_then(|e| e.year)
        .unwrap_or(*series.years().last().expect("series are non-empty"));
    Ok(Some(series.covariate_at(year)?))
}

pub fn run(ctx: &mut Context) -> CliResult<()> {
    let wanted: Vec<Scenario> = [Scenario::Observation, Scenario::Actual, Scenario::Counterfactual]
        .into_iter()
        .filter(|&s| ctx.config.path_for(s).is_some())
        .collect();
    if wanted.is_empty() {
        return Err(CliError::Config("no series configured under [data]".into()));
    }
    let d = ctx.config.diagnose;
    let base = ctx.config.fit.attribution();
    let mut summary = Table::new(
        "Threshold and model diagnostics",
        &["series", "mode", "threshold", "xi", "upper_bound", "aic_stationary", "aic_linear", "preferred"],
    );
    let mut results = Vec::new();
    for scenario in wanted {
        let series = ctx.config.series(scenario)?;
        let ts = mrl_thresholds(&series, d.mrl_quantiles[0], d.mrl_quantiles[1], d.mrl_points)?;
        let mrl = mean_residual_life(&series, &ts)?;
        ctx.out.write(&format!("mrl_{scenario}.csv"), &mrl_table(&mrl).to_csv())?;

        let mode = ctx.config.fit.mode_for(scenario);
        let fit = fit_pp(&series, &base.fit_for(mode))?;
        let covariate = covariate_for(ctx, &series, mode)?;
        let g = fit.params.at(&covariate.into_iter().collect::<Vec<_>>())?;
        ctx.out.write(&format!("cdf_{scenario}.csv"), &cdf_table(&g, d.cdf_points)?.to_csv())?;

        let (aic_s, aic_l, preferred) = if series.covariate().is_some() {
            let s = fit_pp(&series, &base.fit_for(CovariateMode::Stationary))?;
            let l = fit_pp(&series, &base.fit_for(CovariateMode::Linear))?;
            let cmp = compare_aic(&s, &l)?;
            let choice = if cmp.delta < 0.0 { "linear" } else { "stationary" };
            (Some(s.aic), Some(l.aic), choice)
        } else {
            (Some(fit.aic), None, "stationary")
        };
        let upper = g.support().upper;
        summary.push(vec![
            scenario.as_str().into(),
            format!("{mode:?}").to_lowercase().into(),
            Cell::num(fit.threshold),
            Cell::num(fit.params.xi),
            Cell::num(upper),
            Cell::num(aic_s.unwrap_or(f64::NAN)),
            Cell::num(aic_l.unwrap_or(f64::NAN)),
            preferred.into(),
        ]);
        results.push(SeriesDiagnostics {
            series: scenario,
            mrl,
            fit,
            covariate,
            upper_bound: upper,
            aic_stationary: aic_s,
            aic_linear: aic_l,
        });
    }
    summary.note("mrl_<series>.csv and cdf_<series>.csv hold the curve samples");
    let text = ctx.out.table("diagnose", &summary)?;
    print!("{text}");
    ctx.report("diagnose", &results)
}
