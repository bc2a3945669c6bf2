//! NV–target dipolar coupling and the frame algebra that reduces it to the
//! transverse coupling D_z⊥² = D_zx² + D_zy² of a single target transition.
//!
//! Positions are expressed in the surface (lab) frame: z along the outward
//! normal of the diamond surface, so targets above an NV at depth h satisfy
//! z ≥ h. The surface rotation Q carries the NV axis at angle α to that normal,
//! and the z-row of Q·𝒟 is the projection of the coupling onto the NV axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{dipolar_constant_mhz_nm3, MIN_DIPOLE_RADIUS_NM};
use crate::{Error, Result};

/// Position and principal-axis orientation of one target molecule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetGeometry {
    /// Target relative to the NV, nm, surface frame.
    pub position: [f64; 3],
    /// Polar angle θe of the target principal axis, radians in [0, π].
    pub theta_e: f64,
    /// Azimuth φe of the target principal axis, radians in [0, 2π).
    pub phi_e: f64,
}

impl TargetGeometry {
    pub fn new(position: [f64; 3], theta_e: f64, phi_e: f64) -> Result<Self> {
        if Vector3::from(position).norm() <= 0.0 {
            return Err(Error::domain("target position must be non-zero"));
        }
        if !(0.0..=std::f64::consts::PI).contains(&theta_e) {
            return Err(Error::domain(format!("theta_e = {theta_e} outside [0, pi]")));
        }
        if !(0.0..std::f64::consts::TAU).contains(&phi_e) {
            return Err(Error::domain(format!("phi_e = {phi_e} outside [0, 2pi)")));
        }
        Ok(Self { position, theta_e, phi_e })
    }
}

/// Orientation of the NV axis relative to the surface normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFrame {
    pub alpha: f64,
}

impl SurfaceFrame {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&alpha) {
            return Err(Error::domain(format!("surface alpha = {alpha} outside [0, pi/2]")));
        }
        Ok(Self { alpha })
    }

    /// {100} surface, α = acos(1/√3).
    pub fn diamond_100() -> Self {
        Self { alpha: crate::constants::surface_100_alpha() }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        surface_rotation(self.alpha)
    }
}

/// 𝒟₀ = (J/r³)(1 − 3 r̂ r̂ᵀ) in MHz for a position in nm.
pub fn dipolar_tensor(position: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r = position.norm();
    if !(r >= MIN_DIPOLE_RADIUS_NM) {
        return Err(Error::domain(format!(
            "NV-target distance {r} nm is below the point-dipole floor of {MIN_DIPOLE_RADIUS_NM} nm"
        )));
    }
    let unit = position / r;
    let scale = dipolar_constant_mhz_nm3() / (r * r * r);
    Ok((Matrix3::identity() - 3.0 * unit * unit.transpose()) * scale)
}

/// ℛ(n̂(θe, φe)): columns e_θ, e_φ, n̂.
pub fn orientation_rotation(theta_e: f64, phi_e: f64) -> Matrix3<f64> {
    let (st, ct) = theta_e.sin_cos();
    let (sp, cp) = phi_e.sin_cos();
    Matrix3::new(
        ct * cp, -sp, st * cp, //
        ct * sp, cp, st * sp, //
        -st, 0.0, ct,
    )
}

/// Q(α), rotation from the NV frame to the lab frame.
pub fn surface_rotation(alpha: f64) -> Matrix3<f64> {
    let (s, c) = alpha.sin_cos();
    Matrix3::new(
        c, 0.0, -s, //
        0.0, 1.0, 0.0, //
        s, 0.0, c,
    )
}

/// Reduction matrix ℳ for one transition: a coefficient times a fixed pattern.
/// The unspecified (3,3) entries only carry T_z terms and are set to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionMatrix {
    pub delta_m: i32,
    pub coefficient: f64,
    pub pattern: Matrix3<f64>,
}

impl ReductionMatrix {
    pub fn matrix(&self) -> Matrix3<f64> {
        self.pattern * self.coefficient
    }
}

/// ℳ_Δm(α0, α1); `alpha0` is the lower-energy state of the pair.
pub fn reduction_matrix(delta_m: i32, alpha0: f64, alpha1: f64) -> Result<ReductionMatrix> {
    let (coefficient, pattern) = match delta_m {
        0 => (
            ((alpha0 + alpha1) / 2.0).cos(),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
        ),
        1 => (
            (alpha0 / 2.0).sin() * (alpha1 / 2.0).cos(),
            Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0),
        ),
        -1 => (
            (alpha0 / 2.0).cos() * (alpha1 / 2.0).sin(),
            Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0),
        ),
        other => return Err(Error::domain(format!("delta_m must be -1, 0 or +1, got {other}"))),
    };
    Ok(ReductionMatrix { delta_m, coefficient, pattern })
}

/// Transverse coupling (Q𝒟)_zx² + (Q𝒟)_zy² in MHz² with 𝒟 = 𝒟₀·ℛ·ℳ.
pub fn effective_coupling(
    geom: &TargetGeometry,
    frame: &SurfaceFrame,
    delta_m: i32,
    alpha0: f64,
    alpha1: f64,
) -> Result<f64> {
    let m = reduction_matrix(delta_m, alpha0, alpha1)?;
    let d0 = dipolar_tensor(&Vector3::from(geom.position))?;
    let coupling = frame.rotation() * d0 * orientation_rotation(geom.theta_e, geom.phi_e) * m.matrix();
    Ok(coupling[(2, 0)].powi(2) + coupling[(2, 1)].powi(2))
}

/// Row vector (Q𝒟₀ℛ)_{z·}: the NV-axis coupling row before reduction.
/// Shared by every member of a merged transition for one sample.
pub(crate) fn coupling_row(position: &Vector3<f64>, q: &Matrix3<f64>, theta_e: f64, phi_e: f64) -> Result<Vector3<f64>> {
    let d0 = dipolar_tensor(position)?;
    let row = q.row(2) * d0 * orientation_rotation(theta_e, phi_e);
    Ok(row.transpose())
}

/// D_z⊥² for a coupling row and a reduction matrix.
pub(crate) fn transverse_from_row(row: &Vector3<f64>, m: &Matrix3<f64>) -> f64 {
    let reduced = row.transpose() * m;
    reduced[0].powi(2) + reduced[1].powi(2)
}
