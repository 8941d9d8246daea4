use eventattr::attribution::{run_attribution, AttributionResult, EventSource};
use eventattr::data::Scenario;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::report::{Cell, Table};

pub(super) fn attribution(ctx: &Context) -> CliResult<AttributionResult> {
    let event = ctx.config.event()?;
    let obs = match event.source {
        EventSource::Magnitude(_) => Some(ctx.config.series(Scenario::Observation)?),
        EventSource::Probability(_) => None,
    };
    let (actual, cf) = ctx.actual_and_counterfactual()?;
    Ok(run_attribution(obs.as_ref(), &actual, &cf, event, &ctx.config.fit.attribution())?)
}

fn summary_table(r: &AttributionResult) -> Table {
    let mut t = Table::new("Risk ratio", &["quantity", "value"]);
    let mut row = |name: &str, v: f64| t.push(vec![name.into(), Cell::num(v)]);
    if let EventSource::Magnitude(z) = r.event.source {
        row("z_O", z);
    }
    row("p_O", r.p_o);
    row("z_A", r.z_a);
    row("p_C", r.p_c);
    row("log2 RR", r.log2_rr);
    row("RR", r.rr);
    row("FAR", r.far);
    if let Some(x) = r.covariate_at_event {
        row("covariate (actual)", x);
    }
    if let Some(u) = &r.uncorrected {
        row("uncorrected p_A", u.p_a);
        row("uncorrected p_C", u.p_c);
        row("uncorrected log2 RR", u.log2_rr);
        t.note("uncorrected rows evaluate the raw observed magnitude in both model scenarios");
    }
    if r.is_unbounded() {
        t.note("z_A lies beyond the counterfactual upper bound; only the LRT bound is available");
    }
    if !r.fits_converged() {
        t.note("warning: at least one fit did not converge");
    }
    t
}

pub fn run(ctx: &mut Context) -> CliResult<()> {
    let result = attribution(ctx)?;
    let text = ctx.out.table("attribute", &summary_table(&result))?;
    print!("{text}");
    ctx.report("attribute", &result)?;
    if !result.fits_converged() {
        return Err(CliError::Fit("a fit did not converge; see attribute.json".into()));
    }
    Ok(())
}
