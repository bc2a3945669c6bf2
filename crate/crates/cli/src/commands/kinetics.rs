use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zfepr::fit::{fit_powerlaw_loglog, kinetics_series, FitResult, KineticsReport, PeakFitOptions};
use zfepr::parallel::Execution;
use zfepr::spectrum::{format_f64, Spectrum};

use super::Context;
use crate::config::{peak_fit_options, FitOverrides};
use crate::error::{CliError, CliResult};
use crate::output::{load_spectrum, pm, write_bytes, write_json};

#[derive(Debug, Clone, Default)]
pub struct KineticsArgs {
    /// CSV with columns `time_h,path`; paths relative to the manifest.
    pub manifest: Option<PathBuf>,
    /// CSV with columns `power_w_per_cm2,t_d_h[,t_d_err_h]`.
    pub powerlaw: Option<PathBuf>,
    pub model: FitOverrides,
}

#[derive(Deserialize)]
struct ManifestRow {
    time_h: f64,
    path: PathBuf,
}

#[derive(Deserialize)]
struct PowerRow {
    power_w_per_cm2: f64,
    t_d_h: f64,
    #[serde(default)]
    t_d_err_h: Option<f64>,
}

#[derive(Serialize)]
struct SeriesReport<'a> {
    manifest: String,
    options: &'a PeakFitOptions,
    report: &'a KineticsReport,
}

#[derive(Serialize)]
struct PowerLawReport<'a> {
    table: String,
    /// ln t_d = a·ln σ + b
    log_base: &'static str,
    a: f64,
    a_err: f64,
    b: f64,
    b_err: f64,
    result: &'a FitResult,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => CliError::from_core_at(path, e.into()),
                _ => CliError::Validation(format!("{} row {}: {e}", path.display(), i + 1)),
            })
        })
        .collect()
}

fn load_series(manifest: &Path) -> CliResult<Vec<(f64, Spectrum)>> {
    let rows: Vec<ManifestRow> = read_csv(manifest)?;
    if rows.is_empty() {
        return Err(CliError::Validation(format!("{}: manifest lists no spectra", manifest.display())));
    }
    let base = manifest.parent().unwrap_or(Path::new(""));
    rows.into_iter()
        .map(|r| {
            let path = if r.path.is_absolute() { r.path } else { base.join(r.path) };
            Ok((r.time_h, load_spectrum(&path)?))
        })
        .collect()
}

fn table_csv(report: &KineticsReport, n_peaks: usize) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<String> = ["time_h", "fit_ok", "converged", "total_area", "total_area_err"].map(String::from).to_vec();
    for k in 1..=n_peaks {
        header.extend([
            format!("center_{k}_mhz"),
            format!("area_{k}"),
            format!("area_err_{k}"),
            format!("fwhm_{k}_mhz"),
            format!("fwhm_err_{k}_mhz"),
        ]);
    }
    let to_err = |e: csv::Error| CliError::Validation(e.to_string());
    w.write_record(&header).map_err(to_err)?;
    for r in &report.rows {
        let num = |v: f64| if v.is_finite() { format_f64(v) } else { String::new() };
        let mut rec = vec![num(r.time), r.fit_ok.to_string(), r.converged.to_string(), num(r.total_area), num(r.total_area_err)];
        for k in 0..n_peaks {
            let get = |v: &Vec<f64>| v.get(k).map_or(String::new(), |x| num(*x));
            rec.extend([get(&r.centers), get(&r.areas), get(&r.area_errs), get(&r.fwhms), get(&r.fwhm_errs)]);
        }
        w.write_record(&rec).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| CliError::Validation(e.to_string()))
}

fn run_series(ctx: &Context, manifest: &Path, overrides: &FitOverrides) -> CliResult<bool> {
    let opts = peak_fit_options(ctx.cfg.config.fit.as_ref(), overrides)?;
    let spectra = load_series(manifest)?;
    let report = kinetics_series(&spectra, &opts, Execution::Parallel)?;
    let json = ctx.out.join("kinetics.json");
    write_json(&json, &SeriesReport { manifest: manifest.display().to_string(), options: &opts, report: &report })?;
    let csv = ctx.out.join("kinetics.csv");
    write_bytes(&csv, &table_csv(&report, opts.n_peaks)?)?;

    println!("{:>10}  {:>26}  FWHM per peak (MHz)", "time (h)", "total area");
    for r in &report.rows {
        if r.fit_ok {
            let fwhm: Vec<String> = r.fwhms.iter().map(|f| format!("{f:.3}")).collect();
            println!("{:>10.3}  {:>26}  {}", r.time, pm(r.total_area, r.total_area_err), fwhm.join(" "));
        } else {
            println!("{:>10.3}  fit failed: {}", r.time, r.error.as_deref().unwrap_or("unknown"));
        }
    }
    let mut ok = report.rows.iter().all(|r| r.fit_ok && r.converged);
    match (&report.decay, &report.decay_error) {
        (Some(d), _) => {
            if let Some((td, err)) = d.param("t_d") {
                println!("decay time t_d = {} h{}", pm(td, err), if d.degenerate { " (unconstrained)" } else { "" });
            }
            ok &= d.converged;
        }
        (None, Some(e)) => {
            println!("decay fit failed: {e}");
            ok = false;
        }
        (None, None) => ok = false,
    }
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(ok)
}

fn run_powerlaw(ctx: &Context, table: &Path) -> CliResult<bool> {
    let rows: Vec<PowerRow> = read_csv(table)?;
    let power: Vec<f64> = rows.iter().map(|r| r.power_w_per_cm2).collect();
    let t_d: Vec<f64> = rows.iter().map(|r| r.t_d_h).collect();
    let errs: Option<Vec<f64>> = rows.iter().map(|r| r.t_d_err_h).collect();
    if errs.is_none() && rows.iter().any(|r| r.t_d_err_h.is_some()) {
        return Err(CliError::Validation(format!("{}: t_d_err_h must be given for every row or none", table.display())));
    }
    let fit = fit_powerlaw_loglog(&power, &t_d, errs.as_deref())?;
    let (a, a_err) = fit.param("a").unwrap_or((f64::NAN, f64::NAN));
    let (b, b_err) = fit.param("b").unwrap_or((f64::NAN, f64::NAN));
    let path = ctx.out.join("powerlaw.json");
    write_json(
        &path,
        &PowerLawReport { table: table.display().to_string(), log_base: "e", a, a_err, b, b_err, result: &fit },
    )?;
    println!("ln t_d = a ln sigma + b:  a = {}, b = {}", pm(a, a_err), pm(b, b_err));
    println!("wrote {}", path.display());
    Ok(fit.converged)
}

pub fn run(ctx: &Context, args: &KineticsArgs) -> CliResult<()> {
    if args.manifest.is_none() && args.powerlaw.is_none() {
        return Err(CliError::Validation("kinetics needs --manifest and/or --powerlaw".into()));
    }
    let mut ok = true;
    if let Some(m) = &args.manifest {
        ok &= run_series(ctx, m, &args.model)?;
    }
    if let Some(p) = &args.powerlaw {
        ok &= run_powerlaw(ctx, p)?;
    }
    if ctx.strict && !ok {
        return Err(CliError::Numerical("a kinetics fit did not converge".into()));
    }
    Ok(())
}
