use eventattr::attribution::sensitivity_sweep;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::report::{num, Cell, Table};

/// Sweep over event probabilities; `p_values` overrides the config list.
pub fn run(ctx: &mut Context, p_values: &[f64]) -> CliResult<()> {
    let ps = if p_values.is_empty() {
        ctx.config.sensitivity.p_values.clone()
    } else {
        p_values.to_vec()
    };
    if ps.is_empty() {
        return Err(CliError::Config("no event probabilities for the sweep".into()));
    }
    let year = ctx.config.event.as_ref().and_then(|e| e.year);
    let (actual, cf) = ctx.actual_and_counterfactual()?;
    let mode = ctx.config.sensitivity.lrt_mode;
    let rows = sensitivity_sweep(
        &actual,
        &cf,
        &ps,
        year,
        &ctx.config.fit.attribution(),
        &ctx.config.uncertainty.lrt,
        mode,
    )?;

    let mut table = Table::new(
        format!("Sensitivity to the event definition (LRT {})", mode.method()),
        &["p_A", "z_A", "p_C", "log2_rr", "log2_lower", "log2_upper", "rr_lower", "note"],
    );
    for r in &rows {
        let mut lower = Cell::num(r.log2_lower);
        lower.text = if r.log2_lower.is_nan() { String::new() } else { format!("[{}", num(r.log2_lower)) };
        let mut upper = Cell::num(f64::INFINITY);
        upper.text = "inf)".into();
        table.push(vec![
            Cell::num(r.p_a),
            Cell::num(r.z_a),
            Cell::num(r.p_c),
            Cell::num(r.log2_rr),
            lower,
            upper,
            Cell::num(r.rr_lower),
            r.message.clone().unwrap_or_default().into(),
        ]);
    }
    let text = ctx.out.table("sensitivity", &table)?;
    print!("{text}");
    ctx.report("sensitivity", &rows)?;
    if rows.iter().all(|r| r.message.is_some()) {
        return Err(CliError::Uncertainty("every LRT bound in the sweep failed".into()));
    }
    Ok(())
}
