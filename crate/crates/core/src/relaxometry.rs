//! Cross-relaxation signal of one NV–target pair under amplitude-modulated
//! driving.
//!
//! Detuning and Γ2 share one Lorentzian and are both ordinary frequencies in
//! MHz. The resulting extra relaxation ΔΓ1 is converted to ms⁻¹ exactly once,
//! in [`delta_gamma1`], so it can be combined with Γ1′ and evolution times in ms.

use serde::{Deserialize, Serialize};

use crate::constants::MHZ_TO_PER_MS;
use crate::{Error, Result};

/// Linearised contrast is trusted while ΔΓ1·t stays below this.
pub const SMALL_SIGNAL_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Γ1′ = 1/T1′ under modulated driving, ms⁻¹.
    pub gamma1_prime: f64,
    /// NV contribution to Γ2, MHz.
    pub gamma2_nv: f64,
    /// Relative driving index κ = γ_NV B₁/f.
    pub kappa: f64,
    /// Mean NV depth, nm.
    pub depth_h: f64,
    /// Angle between NV axis and surface normal, radians.
    pub surface_alpha: f64,
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1_prime >= 0.0 && self.gamma1_prime.is_finite()) {
            return Err(Error::domain(format!("gamma1_prime = {} must be >= 0", self.gamma1_prime)));
        }
        if !(self.gamma2_nv >= 0.0 && self.gamma2_nv.is_finite()) {
            return Err(Error::domain(format!("gamma2_nv = {} must be >= 0", self.gamma2_nv)));
        }
        // κ = 0 is the undriven limit: every signal term vanishes
        if !(self.kappa >= 0.0 && self.kappa <= 1.0) {
            return Err(Error::domain(format!("kappa = {} must lie in [0, 1]", self.kappa)));
        }
        if !(self.depth_h > 0.0 && self.depth_h.is_finite()) {
            return Err(Error::domain(format!("depth = {} nm must be positive", self.depth_h)));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.surface_alpha) {
            return Err(Error::domain(format!("surface alpha = {} outside [0, pi/2]", self.surface_alpha)));
        }
        Ok(())
    }

    /// Total linewidth parameter Γ2 = Γ2,NV + Γ2,target.
    pub fn gamma2_total(&self, target: TargetLinewidth) -> f64 {
        self.gamma2_nv + target.gamma2_target
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetLinewidth {
    /// MHz
    pub gamma2_target: f64,
}

/// Extra longitudinal relaxation ΔΓ1 in ms⁻¹:
/// (3κ²D²/64)·Γ2/(Γ2² + (f − ω)²), evaluated in MHz and converted.
pub fn delta_gamma1(d_zperp_sq: f64, kappa: f64, gamma2_total: f64, f: f64, omega: f64) -> Result<f64> {
    if !(gamma2_total > 0.0) {
        return Err(Error::domain(format!("gamma2_total = {gamma2_total} MHz must be positive")));
    }
    let detuning = f - omega;
    let lorentz = gamma2_total / (gamma2_total * gamma2_total + detuning * detuning);
    Ok(3.0 * kappa * kappa * d_zperp_sq / 64.0 * lorentz * MHZ_TO_PER_MS)
}

/// |0⟩ population after evolution time `t` (ms): 1/3 + (2/3)exp[−(Γ1′ + ΔΓ1)t].
pub fn population(t: f64, sensor: &SensorParams, dg1: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("evolution time {t} ms must be >= 0")));
    }
    Ok(1.0 / 3.0 + 2.0 / 3.0 * (-(sensor.gamma1_prime + dg1) * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    /// P₀(ΔΓ1 = 0) − P₀(ΔΓ1)
    pub exact: f64,
    /// (2/3)·ΔΓ1·t·exp(−Γ1′t)
    pub linearized: f64,
    /// ΔΓ1·t exceeded [`SMALL_SIGNAL_LIMIT`].
    pub small_signal_violated: bool,
}

pub fn contrast(t: f64, sensor: &SensorParams, dg1: f64) -> Result<Contrast> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("evolution time {t} ms must be >= 0")));
    }
    // P₀(0) − P₀(ΔΓ1) without cancellation
    let exact = -2.0 / 3.0 * (-sensor.gamma1_prime * t).exp() * (-dg1 * t).exp_m1();
    let linearized = linearized_contrast(t, sensor.gamma1_prime, dg1);
    Ok(Contrast { exact, linearized, small_signal_violated: dg1 * t > SMALL_SIGNAL_LIMIT })
}

pub fn linearized_contrast(t: f64, gamma1_prime: f64, dg1: f64) -> f64 {
    2.0 / 3.0 * dg1 * t * (-gamma1_prime * t).exp()
}

/// Evolution time maximising the linearised contrast, 1/Γ1′ (ms).
pub fn optimal_time(sensor: &SensorParams) -> Result<f64> {
    if !(sensor.gamma1_prime > 0.0) {
        return Err(Error::domain("gamma1_prime must be positive to define an optimal time"));
    }
    Ok(1.0 / sensor.gamma1_prime)
}

/// On-resonance contrast at the optimal time, κ²D²/(32·e·Γ1′Γ2).
pub fn peak_contrast(d_zperp_sq: f64, kappa: f64, gamma1_prime: f64, gamma2_total: f64) -> f64 {
    kappa * kappa * d_zperp_sq * MHZ_TO_PER_MS / (32.0 * std::f64::consts::E * gamma1_prime * gamma2_total)
}
