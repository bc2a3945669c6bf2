use serde::Serialize;
use zfepr::spectrum::format_f64;
use zfepr::spin::{observable_transitions, transitions, HyperfineSystem, Transition};

use super::Context;
use crate::error::{CliError, CliResult};
use crate::output::{write_bytes, write_json};

#[derive(Serialize)]
struct PredictReport<'a> {
    system: &'a HyperfineSystem,
    /// Every selection-rule-allowed transition, including zero-frequency ones.
    transitions: &'a [Transition],
}

/// Distinct Δm_T of the members, e.g. "+1" or "-1 +1".
fn delta_m_label(t: &Transition) -> String {
    let mut d: Vec<i32> = t.members.iter().map(|m| m.delta_m).collect();
    d.sort_unstable();
    d.dedup();
    d.iter().map(|v| if *v > 0 { format!("+{v}") } else { v.to_string() }).collect::<Vec<_>>().join(" ")
}

pub fn run(ctx: &Context) -> CliResult<()> {
    let sys = ctx.cfg.config.hyperfine_system("predict")?;
    let rows = observable_transitions(&sys);

    let csv_path = ctx.out.join("predict.csv");
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::from_core_at(&csv_path, e.into());
    w.write_record(["freq_mhz", "xi_total", "delta_m", "assignment"]).map_err(csv_err)?;
    for t in &rows {
        w.write_record([format_f64(t.freq), format_f64(t.xi_total), delta_m_label(t), t.assignment()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?;
    write_bytes(&csv_path, &bytes)?;
    let all = transitions(&sys);
    write_json(&ctx.out.join("predict.json"), &PredictReport { system: &sys, transitions: &all })?;

    println!("{:>12}  {:>10}  {:>7}  assignment", "freq (MHz)", "xi_total", "dm");
    for t in &rows {
        println!("{:>12.4}  {:>10.6}  {:>7}  {}", t.freq, t.xi_total, delta_m_label(t), t.assignment());
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}
