use std::path::PathBuf;

use serde::Serialize;
use zfepr::fit::{fit_peaks, FitResult, PeakFitOptions};
use zfepr::spectrum::subtract_blank;

use super::Context;
use crate::config::{peak_fit_options, FitOverrides};
use crate::error::{CliError, CliResult};
use crate::output::{load_spectrum, pm, save_spectrum, write_json};

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub input: PathBuf,
    pub blank: Option<PathBuf>,
    pub model: FitOverrides,
}

#[derive(Serialize)]
struct FitReport<'a> {
    input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    blank: Option<String>,
    options: &'a PeakFitOptions,
    result: &'a FitResult,
}

pub fn print_fit(fit: &FitResult) {
    println!("model {}  converged {}  ({:?}, {} iterations)", fit.model, fit.converged, fit.termination, fit.n_iterations);
    println!("chi2 {:.6e}  dof {}  reduced {:.4}", fit.chi2, fit.dof, fit.reduced_chi2);
    println!("{:>4}  {:>24}  {:>24}  {:>28}", "peak", "center (MHz)", "FWHM (MHz)", "area (contrast·MHz)");
    for (k, p) in fit.peaks.iter().enumerate() {
        println!("{:>4}  {:>24}  {:>24}  {:>28}", k + 1, pm(p.center, p.center_err), pm(p.fwhm, p.fwhm_err), pm(p.area, p.area_err));
    }
    for w in &fit.warnings {
        println!("warning: {w}");
    }
}

pub fn run(ctx: &Context, args: &FitArgs) -> CliResult<()> {
    let opts = peak_fit_options(ctx.cfg.config.fit.as_ref(), &args.model)?;
    let input = load_spectrum(&args.input)?;
    let spec = match &args.blank {
        Some(path) => {
            let blank = load_spectrum(path)?;
            subtract_blank(&input, &blank).map_err(|e| CliError::Validation(format!("blank {}: {e}", path.display())))?
        }
        None => input,
    };
    let fit = fit_peaks(&spec, &opts)?;
    let csv = save_spectrum(&spec, &ctx.out, "subtracted")?;
    let report = FitReport {
        input: args.input.display().to_string(),
        blank: args.blank.as_ref().map(|p| p.display().to_string()),
        options: &opts,
        result: &fit,
    };
    let path = ctx.out.join("fit.json");
    write_json(&path, &report)?;

    print_fit(&fit);
    println!("wrote {} and {}", path.display(), csv.display());
    if ctx.strict && !fit.converged {
        return Err(CliError::Numerical(format!("fit did not converge ({:?})", fit.termination)));
    }
    Ok(())
}
