//! Ensemble-averaged resonant relaxation for targets distributed uniformly in
//! the half-space above the diamond surface.
//!
//! Two independent routes are provided: the closed form
//! ⟨ΔΓ1⟩ = 1/(2I+1)·J²·πβξcκ²/(256Γ2h³)·(3 + cos 2α), and a Monte Carlo
//! estimate of the underlying position/orientation integral built from the
//! [`geometry`](crate::geometry) primitives.
//!
//! The Monte Carlo estimator samples r with density ∝ r⁻⁴ on [h, 50h], the
//! polar angle uniformly over the spherical cap cos θ ∈ [h/r, 1] (θ measured
//! from the surface normal), and the target principal axis uniformly on the
//! sphere. Samples are grouped into fixed chunks; chunk k draws from ChaCha8
//! stream k of the seed, so results are bit-identical for any worker count.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{
    dipolar_constant_mhz_nm3, BETA, MHZ_TO_PER_MS, MILLIMOLAR_TO_PER_NM3, RADIAL_CUTOFF_DEPTHS,
};
use crate::geometry::{coupling_row, reduction_matrix, surface_rotation, transverse_from_row};
use crate::parallel::{map_chunks, CompensatedSum, Execution};
use crate::relaxometry::{SensorParams, TargetLinewidth};
use crate::spin::{observable_transitions, HyperfineSystem, Transition};
use crate::{Error, Result};

/// Samples per Monte Carlo chunk (one RNG stream each).
pub const MC_CHUNK: u64 = 8192;

/// Smallest accepted Monte Carlo sample count.
pub const MIN_MC_SAMPLES: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    /// Target concentration, mM.
    pub concentration_mm: f64,
    /// NV depth h, nm.
    pub depth_h: f64,
    /// Angle between NV axis and surface normal, radians.
    pub surface_alpha: f64,
    pub kappa: f64,
    /// Γ2 = Γ2,NV + Γ2,target, MHz.
    pub gamma2_total: f64,
    pub nuclear_spin_twice: u32,
    /// Transition strength ξ (channel-weighted total of the transition).
    pub xi: f64,
    pub prefactor_beta: f64,
}

impl EnsembleParams {
    /// Copies κ, h and α from the sensor; Γ2 is the sum of both linewidths.
    pub fn from_sensor(
        sensor: &SensorParams,
        target: TargetLinewidth,
        concentration_mm: f64,
        nuclear_spin_twice: u32,
        xi: f64,
    ) -> Self {
        Self {
            concentration_mm,
            depth_h: sensor.depth_h,
            surface_alpha: sensor.surface_alpha,
            kappa: sensor.kappa,
            gamma2_total: sensor.gamma2_total(target),
            nuclear_spin_twice,
            xi,
            prefactor_beta: BETA,
        }
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth_h > 0.0 && self.depth_h.is_finite()) {
            return Err(Error::domain(format!("depth h = {} nm must be positive", self.depth_h)));
        }
        if !(self.concentration_mm >= 0.0 && self.concentration_mm.is_finite()) {
            return Err(Error::domain(format!("concentration {} mM must be >= 0", self.concentration_mm)));
        }
        if !(self.gamma2_total > 0.0) {
            return Err(Error::domain(format!("gamma2_total = {} MHz must be positive", self.gamma2_total)));
        }
        if self.nuclear_spin_twice == 0 {
            return Err(Error::domain("nuclear spin must be at least 1/2"));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.surface_alpha) {
            return Err(Error::domain(format!("surface alpha = {} outside [0, pi/2]", self.surface_alpha)));
        }
        if !(self.xi >= 0.0) {
            return Err(Error::domain(format!("xi = {} must be >= 0", self.xi)));
        }
        Ok(())
    }

    fn concentration_per_nm3(&self) -> f64 {
        self.concentration_mm * MILLIMOLAR_TO_PER_NM3
    }

    /// 1/(2I+1)·J²·πβξcκ²/h³·(3 + cos 2α), MHz², shared by rate and contrast.
    fn common_factor(&self) -> f64 {
        let j = dipolar_constant_mhz_nm3();
        let h3 = self.depth_h.powi(3);
        let thermal = 1.0 / (f64::from(self.nuclear_spin_twice) + 1.0);
        thermal
            * j
            * j
            * std::f64::consts::PI
            * self.prefactor_beta
            * self.xi
            * self.concentration_per_nm3()
            * self.kappa
            * self.kappa
            / h3
            * (3.0 + (2.0 * self.surface_alpha).cos())
    }
}

/// Closed-form ⟨ΔΓ1⟩ in ms⁻¹.
pub fn analytic_ensemble_rate(p: &EnsembleParams) -> Result<f64> {
    p.validate()?;
    Ok(p.common_factor() / (256.0 * p.gamma2_total) * MHZ_TO_PER_MS)
}

/// Ensemble contrast at the optimal evolution time t = 1/Γ1′.
pub fn ensemble_contrast(p: &EnsembleParams, gamma1_prime: f64) -> Result<f64> {
    p.validate()?;
    if !(gamma1_prime > 0.0) {
        return Err(Error::domain(format!("gamma1_prime = {gamma1_prime} must be positive")));
    }
    Ok(p.common_factor() / (384.0 * std::f64::consts::E * gamma1_prime * p.gamma2_total) * MHZ_TO_PER_MS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// ms⁻¹
    pub mean: f64,
    /// ms⁻¹
    pub standard_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl McEstimate {
    pub fn relative_error(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.standard_error / self.mean.abs()
        }
    }
}

/// Monte Carlo estimate of ⟨ΔΓ1⟩ for one observable transition of `sys`
/// (index into [`observable_transitions`]). `p.xi` is not used: the members'
/// reduction matrices enter the integrand directly.
pub fn mc_ensemble_rate(
    p: &EnsembleParams,
    sys: &HyperfineSystem,
    transition_index: usize,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    mc_ensemble_rate_with(p, sys, transition_index, n_samples, seed, Execution::default())
}

pub fn mc_ensemble_rate_with(
    p: &EnsembleParams,
    sys: &HyperfineSystem,
    transition_index: usize,
    n_samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    p.validate()?;
    if p.nuclear_spin_twice != sys.nuclear_spin_twice() {
        return Err(Error::invalid(format!(
            "ensemble nuclear spin 2I = {} does not match the system's {}",
            p.nuclear_spin_twice,
            sys.nuclear_spin_twice()
        )));
    }
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_MC_SAMPLES} samples, got {n_samples}")));
    }
    let transitions = observable_transitions(sys);
    let transition = transitions.get(transition_index).ok_or_else(|| {
        Error::invalid(format!(
            "transition index {transition_index} out of range; {} observable transitions",
            transitions.len()
        ))
    })?;
    let integrand = Integrand::new(p, transition)?;

    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let chunks = map_chunks(n_chunks, exec, |chunk| {
        let count = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
        integrand.run_chunk(seed, chunk, count)
    });

    let mut sum = CompensatedSum::default();
    let mut sum_sq = CompensatedSum::default();
    for chunk in chunks {
        let (s, s2) = chunk?;
        sum.merge(&s);
        sum_sq.merge(&s2);
    }
    let n = n_samples as f64;
    let mean = sum.value() / n;
    let variance = ((sum_sq.value() / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(McEstimate { mean, standard_error: (variance / n).sqrt(), n_samples, seed })
}

struct Integrand {
    depth: f64,
    inv_h3: f64,
    inv_span: f64,
    q: Matrix3<f64>,
    reductions: Vec<Matrix3<f64>>,
    /// c·3κ²/(64Γ2)/(2I+1), converted to ms⁻¹ per MHz².
    prefactor: f64,
}

impl Integrand {
    fn new(p: &EnsembleParams, transition: &Transition) -> Result<Self> {
        let reductions = transition
            .members
            .iter()
            .map(|m| reduction_matrix(m.delta_m, m.alpha0(), m.alpha1()).map(|r| r.matrix()))
            .collect::<Result<Vec<_>>>()?;
        let h = p.depth_h;
        let r_max = RADIAL_CUTOFF_DEPTHS * h;
        let inv_h3 = h.powi(-3);
        let thermal = 1.0 / (f64::from(p.nuclear_spin_twice) + 1.0);
        Ok(Self {
            depth: h,
            inv_h3,
            inv_span: inv_h3 - r_max.powi(-3),
            q: surface_rotation(p.surface_alpha),
            reductions,
            prefactor: p.concentration_per_nm3() * thermal * 3.0 * p.kappa * p.kappa / (64.0 * p.gamma2_total)
                * MHZ_TO_PER_MS,
        })
    }

    fn run_chunk(&self, seed: u64, chunk: u64, count: u64) -> std::result::Result<(CompensatedSum, CompensatedSum), Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let mut sum = CompensatedSum::default();
        let mut sum_sq = CompensatedSum::default();
        for _ in 0..count {
            let w = self.sample(&mut rng)?;
            sum.add(w);
            sum_sq.add(w * w);
        }
        Ok((sum, sum_sq))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        use std::f64::consts::TAU;
        // inverse CDF of p(r) = 3r⁻⁴/(h⁻³ − R⁻³)
        let u: f64 = rng.random();
        let r = (self.inv_h3 - u * self.inv_span).powf(-1.0 / 3.0);
        let density = 3.0 * r.powi(-4) / self.inv_span;

        let cos_min = self.depth / r;
        let cos_theta = cos_min + (1.0 - cos_min) * rng.random::<f64>();
        let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        let phi = TAU * rng.random::<f64>();
        let cap_area = TAU * (1.0 - cos_min);
        let position = Vector3::new(r * sin_theta * phi.cos(), r * sin_theta * phi.sin(), r * cos_theta);

        let cos_theta_e: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let theta_e = cos_theta_e.clamp(-1.0, 1.0).acos();
        let phi_e = TAU * rng.random::<f64>();

        let row = coupling_row(&position, &self.q, theta_e, phi_e)?;
        let coupling: f64 = self.reductions.iter().map(|m| transverse_from_row(&row, m)).sum();
        Ok(self.prefactor * coupling * r * r * cap_area / density)
    }
}

/// One point of a β calibration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub params: EnsembleParams,
    pub system: HyperfineSystem,
    pub transition_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCalibration {
    pub beta: f64,
    pub standard_error: f64,
    /// Per point: (MC / closed form at β = 1, its standard error).
    pub ratios: Vec<(f64, f64)>,
}

/// Inverse-variance weighted estimate of β from MC runs over a sweep.
/// Point i uses seed `seed + i`.
pub fn calibrate_beta(points: &[CalibrationPoint], n_samples: u64, seed: u64, exec: Execution) -> Result<BetaCalibration> {
    if points.is_empty() {
        return Err(Error::invalid("calibration sweep is empty"));
    }
    let mut ratios = Vec::with_capacity(points.len());
    let (mut weighted, mut weights) = (0.0, 0.0);
    for (i, point) in points.iter().enumerate() {
        let mut unit = point.params;
        unit.prefactor_beta = 1.0;
        unit.xi = observable_transitions(&point.system)
            .get(point.transition_index)
            .map(|t| t.xi_total)
            .ok_or_else(|| Error::invalid(format!("calibration point {i}: bad transition index")))?;
        let closed = analytic_ensemble_rate(&unit)?;
        let mc = mc_ensemble_rate_with(&unit, &point.system, point.transition_index, n_samples, seed.wrapping_add(i as u64), exec)?;
        if closed <= 0.0 || mc.standard_error <= 0.0 {
            return Err(Error::invalid(format!("calibration point {i} has a vanishing signal")));
        }
        let ratio = mc.mean / closed;
        let se = mc.standard_error / closed;
        weighted += ratio / (se * se);
        weights += 1.0 / (se * se);
        ratios.push((ratio, se));
    }
    Ok(BetaCalibration { beta: weighted / weights, standard_error: weights.sqrt().recip(), ratios })
}

/// Deterministic random sweep over I, hyperfine constants, transition, depth,
/// surface angle, κ, Γ2 and concentration.
pub fn random_sweep(count: usize, seed: u64) -> Vec<CalibrationPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let spin_twice = rng.random_range(1..=5u32);
            let a_par = rng.random_range(40.0..130.0);
            let a_perp = rng.random_range(0.1..0.6) * a_par;
            let system = HyperfineSystem::new(spin_twice, a_perp, a_par, "sweep").expect("valid by construction");
            let candidates: Vec<usize> = observable_transitions(&system)
                .iter()
                .enumerate()
                .filter(|(_, t)| t.xi_total > 0.05)
                .map(|(i, _)| i)
                .collect();
            let transition_index = candidates[rng.random_range(0..candidates.len())];
            let xi = observable_transitions(&system)[transition_index].xi_total;
            let params = EnsembleParams {
                concentration_mm: rng.random_range(10.0..200.0),
                depth_h: rng.random_range(3.0..15.0),
                surface_alpha: rng.random_range(0.0..std::f64::consts::FRAC_PI_2),
                kappa: rng.random_range(0.1..0.9),
                gamma2_total: rng.random_range(0.5..5.0),
                nuclear_spin_twice: spin_twice,
                xi,
                prefactor_beta: BETA,
            };
            CalibrationPoint { params, system, transition_index }
        })
        .collect()
}
