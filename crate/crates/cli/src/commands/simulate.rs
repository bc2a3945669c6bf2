use zfepr::parallel::Execution;
use zfepr::spectrum::{noise_sigma_for_snr, spectral_lines, synthesize_lines, synthesize_spectrum};

use super::Context;
use crate::error::CliResult;
use crate::output::save_spectrum;

/// Seed offset of the baseline-only companion trace.
pub const BLANK_SEED_OFFSET: u64 = 1;

pub fn run(ctx: &Context, with_blank: bool) -> CliResult<()> {
    let cfg = &ctx.cfg.config;
    let sys = cfg.hyperfine_system("simulate")?;
    let ens = cfg.ensemble(&sys, "simulate")?;
    let sensor = cfg.sensor_params("simulate")?;
    let grid = cfg.grid()?;
    let baseline = cfg.baseline(&ctx.cfg)?;
    let noise = cfg.noise()?;

    let lines = spectral_lines(&sys, &ens, &sensor)?;
    let noise_sigma = match (noise.sigma_contrast, noise.snr) {
        (Some(s), _) => s,
        (None, Some(snr)) => noise_sigma_for_snr(&lines, &grid, snr)?,
        (None, None) => 0.0,
    };
    let mut spec = synthesize_spectrum(&sys, &ens, &sensor, &grid, &baseline, noise_sigma, ctx.seed, Execution::Parallel)?;
    if let Some(snr) = noise.snr {
        spec.meta.params["target_snr"] = snr.into();
    }
    let path = save_spectrum(&spec, &ctx.out, "spectrum")?;

    println!("{:>12}  {:>14}  {:>10}", "center (MHz)", "height", "HWHM (MHz)");
    for l in &lines {
        println!("{:>12.4}  {:>14.6e}  {:>10.4}", l.center, l.height, l.hwhm);
    }
    println!("noise sigma {noise_sigma:.6e}, seed {}, {} points", ctx.seed, grid.len());
    println!("wrote {}", path.display());

    if with_blank {
        let blank_seed = ctx.seed.wrapping_add(BLANK_SEED_OFFSET);
        let mut blank = synthesize_lines(&[], &grid, &baseline, noise_sigma, blank_seed, Execution::Parallel)?;
        blank.meta.params = serde_json::json!({ "baseline_only": true, "noise_sigma": noise_sigma });
        let path = save_spectrum(&blank, &ctx.out, "blank")?;
        println!("wrote {} (seed {blank_seed})", path.display());
    }
    Ok(())
}
