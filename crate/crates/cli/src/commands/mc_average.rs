use std::time::Instant;

use serde::Serialize;
use zfepr::constants::{BETA, BETA_UNCERTAINTY};
use zfepr::ensemble::{
    analytic_ensemble_rate, ensemble_contrast, mc_ensemble_rate_with, EnsembleParams, McEstimate, MIN_MC_SAMPLES,
};
use zfepr::parallel::Execution;
use zfepr::spin::{observable_transitions, HyperfineSystem};

use super::Context;
use crate::error::{CliError, CliResult};
use crate::output::write_json;

pub const DEFAULT_SAMPLES: u64 = 1_000_000;

#[derive(Debug, Clone, Default)]
pub struct McArgs {
    pub samples: Option<u64>,
    pub transition: Option<usize>,
    pub scaling: bool,
}

#[derive(Serialize)]
struct Scaling {
    /// Estimate at depth 2h (seed + 1).
    doubled_depth: McEstimate,
    /// ⟨ΔΓ1⟩(h)/⟨ΔΓ1⟩(2h); the closed form gives 8.
    depth_ratio: f64,
    depth_ratio_se: f64,
    /// Estimate with n/4 samples (seed + 2).
    quarter_samples: McEstimate,
    /// SE(n/4)/SE(n); 2 for an n^(−1/2) estimator.
    se_ratio: f64,
}

#[derive(Serialize)]
struct McReport<'a> {
    system: &'a HyperfineSystem,
    params: EnsembleParams,
    transition_index: usize,
    transition_freq_mhz: f64,
    estimate: McEstimate,
    /// ms⁻¹
    analytic_rate: f64,
    mc_over_analytic: f64,
    beta: f64,
    beta_uncertainty: f64,
    /// Closed-form ensemble contrast at t = 1/Γ1′.
    contrast_at_optimal_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaling: Option<Scaling>,
}

fn ratio(a: &McEstimate, b: &McEstimate) -> (f64, f64) {
    let r = a.mean / b.mean;
    (r, r.abs() * (a.relative_error().powi(2) + b.relative_error().powi(2)).sqrt())
}

pub fn run(ctx: &Context, args: &McArgs) -> CliResult<()> {
    let cfg = &ctx.cfg.config;
    let sys = cfg.hyperfine_system("mc-average")?;
    let sensor = cfg.sensor_params("mc-average")?;
    let ens = cfg.ensemble(&sys, "mc-average")?;
    let n = args.samples.or(cfg.mc.as_ref().map(|m| m.samples)).unwrap_or(DEFAULT_SAMPLES);
    if n < MIN_MC_SAMPLES {
        return Err(CliError::Validation(format!("at least {MIN_MC_SAMPLES} samples are required, got {n}")));
    }
    let rows = observable_transitions(&sys);
    let strongest = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.xi_total.total_cmp(&b.1.xi_total))
        .map(|(i, _)| i)
        .ok_or_else(|| CliError::Validation("system has no observable transition".into()))?;
    let index = args.transition.or(cfg.mc.as_ref().and_then(|m| m.transition_index)).unwrap_or(strongest);
    let transition = rows.get(index).ok_or_else(|| {
        CliError::Validation(format!("transition index {index} out of range: {} observable transitions", rows.len()))
    })?;
    let params = ens.with_xi(transition.xi_total);

    let started = Instant::now();
    let estimate = mc_ensemble_rate_with(&params, &sys, index, n, ctx.seed, Execution::Parallel)?;
    let scaling = if args.scaling {
        let deep = EnsembleParams { depth_h: 2.0 * params.depth_h, ..params };
        let doubled_depth = mc_ensemble_rate_with(&deep, &sys, index, n, ctx.seed.wrapping_add(1), Execution::Parallel)?;
        let quarter = (n / 4).max(MIN_MC_SAMPLES);
        let quarter_samples = mc_ensemble_rate_with(&params, &sys, index, quarter, ctx.seed.wrapping_add(2), Execution::Parallel)?;
        let (depth_ratio, depth_ratio_se) = ratio(&estimate, &doubled_depth);
        Some(Scaling {
            doubled_depth,
            depth_ratio,
            depth_ratio_se,
            quarter_samples,
            se_ratio: quarter_samples.standard_error / estimate.standard_error,
        })
    } else {
        None
    };
    let wall = started.elapsed();

    let analytic_rate = analytic_ensemble_rate(&params)?;
    let report = McReport {
        system: &sys,
        params,
        transition_index: index,
        transition_freq_mhz: transition.freq,
        estimate,
        analytic_rate,
        mc_over_analytic: estimate.mean / analytic_rate,
        beta: BETA,
        beta_uncertainty: BETA_UNCERTAINTY,
        contrast_at_optimal_time: ensemble_contrast(&params, sensor.gamma1_prime)?,
        scaling,
    };
    let path = ctx.out.join("mc_average.json");
    write_json(&path, &report)?;

    println!("transition {index} at {:.4} MHz (xi = {:.6})", transition.freq, transition.xi_total);
    println!("mean            {:.9e} ms^-1", estimate.mean);
    println!("standard error  {:.3e} ms^-1", estimate.standard_error);
    println!("closed form     {analytic_rate:.9e} ms^-1 (ratio {:.6})", report.mc_over_analytic);
    println!("n {n}, seed {}, workers {}", ctx.seed, ctx.workers_label());
    if let Some(s) = &report.scaling {
        println!("depth ratio h/2h {:.4} ± {:.4} (closed form 8)", s.depth_ratio, s.depth_ratio_se);
        println!("SE ratio n/4 vs n {:.4} (expected 2)", s.se_ratio);
    }
    println!("wall time {:.3} s", wall.as_secs_f64());
    println!("wrote {}", path.display());
    Ok(())
}
