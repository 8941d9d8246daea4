use eventattr::attribution::AttributionResult;
use eventattr::data::ScenarioSeries;
use eventattr::uncertainty::{
    bootstrap_interval, delta_interval, lrt_lower_bound, IntervalDiagnostics, IntervalResult, LrtMode, LrtProblem,
    Method,
};
use serde::Serialize;

use super::attribute::attribution;
use super::Context;
use crate::error::{CliError, CliResult};
use crate::report::{num, Cell, Table};

#[derive(Serialize)]
struct MethodRow {
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval: Option<IntervalResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct UncertaintyReport<'a> {
    attribution: &'a AttributionResult,
    intervals: Vec<MethodRow>,
    /// `None` when either LRT bound is missing.
    joint_not_above_pc_only: Option<bool>,
}

fn interval(
    ctx: &Context,
    method: Method,
    attr: &AttributionResult,
    actual: &ScenarioSeries,
    cf: &ScenarioSeries,
    problem: &mut Option<LrtProblem>,
) -> eventattr::Result<IntervalResult> {
    let u = &ctx.config.uncertainty;
    match method {
        Method::Delta => delta_interval(attr, u.level),
        Method::Bootstrap => bootstrap_interval(attr, actual, cf, &ctx.config.bootstrap(), &ctx.config.fit.attribution()),
        Method::LrtPcOnly | Method::LrtJoint => {
            if problem.is_none() {
                *problem = Some(LrtProblem::from_series(
                    actual,
                    cf,
                    &attr.actual_fit,
                    &attr.counterfactual_fit,
                    attr.actual_covariate(),
                )?);
            }
            let mode = if method == Method::LrtJoint { LrtMode::Joint } else { LrtMode::PcOnly };
            lrt_lower_bound(problem.as_ref().expect("set above"), attr.p_a(), mode, &u.lrt)
        }
    }
}

fn note(iv: &IntervalResult) -> String {
    match &iv.diagnostics {
        IntervalDiagnostics::Delta(d) => {
            let mut s = format!("s.e. {}", num(d.std_error));
            if d.pseudo_inverse_covariance {
                s.push_str("; covariance from a pseudo-inverse");
            }
            s
        }
        IntervalDiagnostics::Bootstrap(b) => b.summary.clone(),
        IntervalDiagnostics::Lrt(l) => {
            let mut s = match l.mode {
                LrtMode::PcOnly => "pc_only (z_A fixed)".to_string(),
                LrtMode::Joint => "joint (z_A and p_C)".to_string(),
            };
            if !l.monotone {
                s.push_str("; non-monotone probe, penalized search");
            }
            if l.at_bracket_floor {
                s.push_str("; bound at bracket floor");
            }
            s
        }
    }
}

pub fn run(ctx: &mut Context) -> CliResult<()> {
    let methods = ctx.config.uncertainty.methods.clone();
    if methods.is_empty() {
        return Err(CliError::Config("uncertainty.methods is empty".into()));
    }
    let attr = attribution(ctx)?;
    let (actual, cf) = ctx.actual_and_counterfactual()?;
    let mut problem = None;
    let rows: Vec<MethodRow> = methods
        .iter()
        .map(|&method| match interval(ctx, method, &attr, &actual, &cf, &mut problem) {
            Ok(iv) => MethodRow {
                method,
                interval: Some(iv),
                error: None,
            },
            Err(e) => MethodRow {
                method,
                interval: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let mut table = Table::new(
        format!(
            "Confidence intervals for log2 RR (estimate {}, level {})",
            num(attr.log2_rr),
            ctx.config.uncertainty.level
        ),
        &["method", "lower", "upper", "rr_lower", "note"],
    );
    for row in &rows {
        match (&row.interval, &row.error) {
            (Some(iv), _) => table.push(vec![
                row.method.as_str().into(),
                Cell::num(iv.lower),
                Cell::num(iv.upper),
                Cell::num(iv.lower.exp2()),
                note(iv).into(),
            ]),
            (None, Some(e)) => table.push(vec![
                row.method.as_str().into(),
                Cell::empty(),
                Cell::empty(),
                Cell::empty(),
                format!("failed: {e}").into(),
            ]),
            (None, None) => unreachable!(),
        }
    }
    let bound = |m: Method| {
        rows.iter()
            .find(|r| r.method == m)
            .and_then(|r| r.interval.as_ref())
            .map(|iv| iv.lower)
    };
    let ordering = match (bound(Method::LrtJoint), bound(Method::LrtPcOnly)) {
        (Some(j), Some(p)) => {
            let ok = j <= p + ctx.config.uncertainty.lrt.tolerance;
            table.note(format!(
                "joint <= pc_only: {} ({} vs {})",
                if ok { "holds" } else { "VIOLATED" },
                num(j),
                num(p)
            ));
            Some(ok)
        }
        _ => None,
    };
    let text = ctx.out.table("uncertainty", &table)?;
    print!("{text}");
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.method)))
        .collect();
    let all_failed = failed.len() == rows.len();
    ctx.report(
        "uncertainty",
        UncertaintyReport {
            attribution: &attr,
            intervals: rows,
            joint_not_above_pc_only: ordering,
        },
    )?;
    if all_failed {
        return Err(CliError::Uncertainty(failed.join("; ")));
    }
    if ordering == Some(false) {
        return Err(CliError::Uncertainty("joint LRT bound exceeds the pc_only bound".into()));
    }
    Ok(())
}
