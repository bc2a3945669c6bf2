//! Zero-field hyperfine Hamiltonian of the target radical,
//! H_T = A⊥(SxIx + SyIy) + A∥SzIz with electron spin S = 1/2 and nuclear spin I.
//!
//! H_T conserves m_T = m_S + m_I. For every interior m_T (|m_T| ≤ I − 1/2) the
//! block spanned by |+1/2, m_T−1/2⟩ and |−1/2, m_T+1/2⟩ mixes with angle α,
//! tan α = χ/m_T, and splits into an upper and a lower branch. The two stretched
//! states m_T = ±(I + 1/2) are unmixed and belong to the upper branch only.
//!
//! Half-integer quantum numbers are carried as twice their value (`*_twice`).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constants::DEGENERACY_THRESHOLD_MHZ;
use crate::{Error, Result};

/// Target spin system: electron spin 1/2 coupled to a nuclear spin I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineSystem {
    nuclear_spin_twice: u32,
    a_perp: f64,
    a_par: f64,
    label: String,
}

impl HyperfineSystem {
    /// `a_perp` and `a_par` in MHz. Requires 2I ≥ 1, A∥ > 0 and A⊥ ≥ 0.
    pub fn new(nuclear_spin_twice: u32, a_perp: f64, a_par: f64, label: impl Into<String>) -> Result<Self> {
        if nuclear_spin_twice == 0 {
            return Err(Error::domain("nuclear spin must be at least 1/2 (2I >= 1)"));
        }
        if !(a_par.is_finite() && a_par > 0.0) {
            return Err(Error::domain(format!("A_par must be positive and finite, got {a_par} MHz")));
        }
        if !(a_perp.is_finite() && a_perp >= 0.0) {
            return Err(Error::domain(format!("A_perp must be non-negative and finite, got {a_perp} MHz")));
        }
        Ok(Self { nuclear_spin_twice, a_perp, a_par, label: label.into() })
    }

    /// ¹⁴N nitroxide (I = 1).
    pub fn nitrogen14(a_perp: f64, a_par: f64) -> Result<Self> {
        Self::new(2, a_perp, a_par, "14N")
    }

    /// ¹⁵N nitroxide (I = 1/2).
    pub fn nitrogen15(a_perp: f64, a_par: f64) -> Result<Self> {
        Self::new(1, a_perp, a_par, "15N")
    }

    pub fn nuclear_spin_twice(&self) -> u32 {
        self.nuclear_spin_twice
    }

    pub fn nuclear_spin(&self) -> f64 {
        f64::from(self.nuclear_spin_twice) / 2.0
    }

    /// Nuclear multiplicity 2I + 1.
    pub fn multiplicity(&self) -> usize {
        self.nuclear_spin_twice as usize + 1
    }

    pub fn a_perp(&self) -> f64 {
        self.a_perp
    }

    pub fn a_par(&self) -> f64 {
        self.a_par
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Largest interior 2·m_T, i.e. 2I − 1.
    fn max_interior_twice(&self) -> i32 {
        self.nuclear_spin_twice as i32 - 1
    }

    /// A⊥ times the S+I− matrix element sqrt(I(I+1) − (m_T−1/2)(m_T+1/2)).
    fn off_diagonal(&self, m_t_twice: i32) -> f64 {
        let n1 = f64::from(self.nuclear_spin_twice + 1);
        let k = f64::from(m_t_twice);
        // I(I+1) − m² + 1/4 = ((2I+1)² − (2m)²)/4
        self.a_perp * ((n1 - k) * (n1 + k)).max(0.0).sqrt() / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Upper,
    Lower,
    Special,
}

/// One eigenstate of H_T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenLevel {
    pub branch: Branch,
    pub m_t_twice: i32,
    /// MHz
    pub energy: f64,
    /// Mixing angle of this state: α for the upper branch, α + π for the lower
    /// branch (so cos α↓ = −cos α↑), 0 for the stretched states.
    pub alpha: f64,
}

impl EigenLevel {
    pub fn m_t(&self) -> f64 {
        f64::from(self.m_t_twice) / 2.0
    }

    /// Angle entering the transition-strength case formulas.
    ///
    /// Equal to `alpha` except for the stretched state m_T = −(I+1/2): that state
    /// is |−1/2, −I⟩, the sin(α/2) component of the mixing form, so its
    /// coupling angle is π.
    pub fn coupling_angle(&self) -> f64 {
        match self.branch {
            Branch::Special if self.m_t_twice < 0 => PI,
            _ => self.alpha,
        }
    }

    /// Amplitudes on (|+1/2, m_T−1/2⟩, |−1/2, m_T+1/2⟩).
    pub fn amplitudes(&self) -> (f64, f64) {
        let half = self.coupling_angle() / 2.0;
        (half.cos(), half.sin())
    }
}

impl fmt::Display for EigenLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.branch {
            Branch::Upper => "up",
            Branch::Lower => "down",
            Branch::Special => "stretched",
        };
        write!(f, "{tag}({})", format_half_integer(self.m_t_twice))
    }
}

/// Formats 2m as "+1/2", "-1", "0", ...
pub fn format_half_integer(twice: i32) -> String {
    let sign = if twice > 0 { "+" } else if twice < 0 { "-" } else { "" };
    let a = twice.unsigned_abs();
    if a.is_multiple_of(2) {
        format!("{sign}{}", a / 2)
    } else {
        format!("{sign}{a}/2")
    }
}

/// Mixing angle α ∈ [0, π] of the interior level m_T, with tan α = χ/m_T and
/// χ = (A⊥/A∥)·sqrt(I(I+1) − (m_T−1/2)(m_T+1/2)).
pub fn mixing_angle(sys: &HyperfineSystem, m_t_twice: i32) -> Result<f64> {
    let max = sys.max_interior_twice();
    let parity_ok = (m_t_twice - max).rem_euclid(2) == 0;
    if m_t_twice.abs() > max || !parity_ok {
        return Err(Error::domain(format!(
            "m_T = {} is not an interior level; valid m_T are {} ..= {} in steps of 1",
            format_half_integer(m_t_twice),
            format_half_integer(-max),
            format_half_integer(max)
        )));
    }
    if m_t_twice == 0 {
        return Ok(FRAC_PI_2);
    }
    // χ/m_T = A⊥K / (A∥ m_T) with A∥ > 0, so atan2 keeps the branch in [0, π].
    Ok(sys.off_diagonal(m_t_twice).atan2(sys.a_par * f64::from(m_t_twice) / 2.0))
}

/// All 2(2I+1) eigenlevels, ordered by m_T and, within an m_T, upper before lower.
pub fn energy_levels(sys: &HyperfineSystem) -> Vec<EigenLevel> {
    let stretched = sys.nuclear_spin_twice as i32 + 1;
    let special_energy = sys.a_par / 2.0 * (f64::from(stretched) / 2.0 - 0.5);
    let mut levels = Vec::with_capacity(2 * sys.multiplicity());
    levels.push(EigenLevel { branch: Branch::Special, m_t_twice: -stretched, energy: special_energy, alpha: 0.0 });
    for m_t_twice in (-sys.max_interior_twice()..=sys.max_interior_twice()).step_by(2) {
        let alpha = mixing_angle(sys, m_t_twice).expect("interior m_T by construction");
        let m = f64::from(m_t_twice) / 2.0;
        // (A∥/2)·sqrt(χ² + m²) written without dividing by A∥
        let radius = (sys.a_par * m).hypot(sys.off_diagonal(m_t_twice)) / 2.0;
        let shift = -sys.a_par / 4.0;
        levels.push(EigenLevel { branch: Branch::Upper, m_t_twice, energy: shift + radius, alpha });
        levels.push(EigenLevel { branch: Branch::Lower, m_t_twice, energy: shift - radius, alpha: alpha + PI });
    }
    levels.push(EigenLevel { branch: Branch::Special, m_t_twice: stretched, energy: special_energy, alpha: 0.0 });
    levels
}

/// Dense matrix of H_T in the product basis |m_S, m_I⟩ (m_S outer index,
/// both in descending order).
pub fn hamiltonian_matrix(sys: &HyperfineSystem) -> DMatrix<f64> {
    let n = sys.nuclear_spin_twice as i32;
    let dim_i = sys.multiplicity();
    let dim = 2 * dim_i;
    let index = |s_twice: i32, i_twice: i32| -> usize {
        let s = if s_twice > 0 { 0 } else { 1 };
        s * dim_i + ((n - i_twice) / 2) as usize
    };
    let mut h = DMatrix::zeros(dim, dim);
    for s_twice in [1, -1] {
        for i_twice in (-n..=n).rev().step_by(2) {
            let row = index(s_twice, i_twice);
            h[(row, row)] = sys.a_par * f64::from(s_twice) * f64::from(i_twice) / 4.0;
        }
    }
    // (A⊥/2)(S+I− + S−I+): connects |+1/2, m_I⟩ and |−1/2, m_I + 1⟩
    let i_sq = f64::from(n) * f64::from(n + 2) / 4.0;
    for i_twice in (-n..n).step_by(2) {
        let m = f64::from(i_twice) / 2.0;
        let element = sys.a_perp / 2.0 * (i_sq - m * (m + 1.0)).sqrt();
        let a = index(1, i_twice);
        let b = index(-1, i_twice + 2);
        h[(a, b)] = element;
        h[(b, a)] = element;
    }
    h
}

/// Numerically diagonalises H_T; eigenvalues in ascending order. Serves as an
/// independent check of [`energy_levels`].
pub fn diagonalize_oracle(sys: &HyperfineSystem) -> Vec<f64> {
    let eig = SymmetricEigen::new(hamiltonian_matrix(sys));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Squared reduction coefficient ξ for one two-level transition.
///
/// `alpha0` belongs to the lower-energy state, `alpha1` to the upper one and
/// `delta_m` is m_T(upper) − m_T(lower).
pub fn xi_case(delta_m: i32, alpha0: f64, alpha1: f64) -> f64 {
    match delta_m {
        0 => ((alpha0 + alpha1) / 2.0).cos().powi(2),
        1 => (alpha0 / 2.0).sin().powi(2) * (alpha1 / 2.0).cos().powi(2),
        -1 => (alpha0 / 2.0).cos().powi(2) * (alpha1 / 2.0).sin().powi(2),
        _ => 0.0,
    }
}

/// Number of transverse coupling channels (D_zx, D_zy) a transition drives.
pub fn transverse_channels(delta_m: i32) -> u32 {
    if delta_m == 0 {
        1
    } else {
        2
    }
}

/// One selection-rule-allowed pair of eigenlevels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMember {
    /// Lower-energy state of the pair.
    pub ground: EigenLevel,
    /// Higher-energy state of the pair.
    pub excited: EigenLevel,
    /// m_T(excited) − m_T(ground) ∈ {−1, 0, +1}.
    pub delta_m: i32,
    /// MHz
    pub freq: f64,
    /// Squared reduction coefficient.
    pub xi: f64,
    /// ξ weighted by the number of transverse channels; in [0, 2].
    pub xi_contribution: f64,
}

impl TransitionMember {
    pub fn alpha0(&self) -> f64 {
        self.ground.coupling_angle()
    }

    pub fn alpha1(&self) -> f64 {
        self.excited.coupling_angle()
    }
}

/// A zero-field resonance: all members sharing one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// MHz
    pub freq: f64,
    pub xi_total: f64,
    /// False for zero-frequency transitions between degenerate levels.
    pub observable: bool,
    pub members: Vec<TransitionMember>,
}

impl Transition {
    /// Human-readable level assignment, e.g. `up(+1/2)<->stretched(+3/2); ...`.
    pub fn assignment(&self) -> String {
        self.members
            .iter()
            .map(|m| format!("{}<->{}", m.ground, m.excited))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Enumerates every pair of levels with Δm_T ∈ {0, ±1}, evaluates its strength
/// and merges pairs with equal frequency. Sorted by frequency.
pub fn transitions(sys: &HyperfineSystem) -> Vec<Transition> {
    let levels = energy_levels(sys);
    let mut members = Vec::new();
    for (i, a) in levels.iter().enumerate() {
        for b in &levels[i + 1..] {
            if (a.m_t_twice - b.m_t_twice).abs() > 2 {
                continue;
            }
            // ties keep enumeration order
            let (ground, excited) = if b.energy < a.energy { (*b, *a) } else { (*a, *b) };
            let delta_m = (excited.m_t_twice - ground.m_t_twice) / 2;
            let xi = xi_case(delta_m, ground.coupling_angle(), excited.coupling_angle());
            members.push(TransitionMember {
                ground,
                excited,
                delta_m,
                freq: excited.energy - ground.energy,
                xi,
                xi_contribution: f64::from(transverse_channels(delta_m)) * xi,
            });
        }
    }
    members.sort_by(|a, b| a.freq.total_cmp(&b.freq));

    let mut out: Vec<Transition> = Vec::new();
    let mut last_freq = f64::NEG_INFINITY;
    for member in members {
        match out.last_mut() {
            Some(t) if member.freq - last_freq <= DEGENERACY_THRESHOLD_MHZ => t.members.push(member),
            _ => out.push(Transition { freq: 0.0, xi_total: 0.0, observable: true, members: vec![member] }),
        }
        last_freq = member.freq;
    }
    for t in &mut out {
        t.freq = t.members.iter().map(|m| m.freq).sum::<f64>() / t.members.len() as f64;
        t.xi_total = t.members.iter().map(|m| m.xi_contribution).sum();
        t.observable = t.freq >= DEGENERACY_THRESHOLD_MHZ;
    }
    out
}

/// Observable transitions only (non-zero frequency).
pub fn observable_transitions(sys: &HyperfineSystem) -> Vec<Transition> {
    transitions(sys).into_iter().filter(|t| t.observable).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Isotope {
    N14,
    N15,
}

/// Closed-form peak positions (ω1, ω2, ω3) in MHz for nitroxide radicals.
pub fn peak_positions_closed_form(isotope: Isotope, a_perp: f64, a_par: f64) -> Result<[f64; 3]> {
    if !(a_perp >= 0.0 && a_par > a_perp && a_par.is_finite()) {
        return Err(Error::domain(format!(
            "closed forms need A_par > A_perp >= 0, got A_perp = {a_perp}, A_par = {a_par} MHz"
        )));
    }
    Ok(match isotope {
        Isotope::N14 => {
            let root = (8.0 * a_perp * a_perp + a_par * a_par).sqrt();
            [0.75 * a_par - 0.25 * root, 0.5 * root, 0.75 * a_par + 0.25 * root]
        }
        Isotope::N15 => [a_perp, 0.5 * (a_par - a_perp), 0.5 * (a_par + a_perp)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n15() -> HyperfineSystem {
        HyperfineSystem::nitrogen15(32.0, 120.0).unwrap()
    }

    fn n14() -> HyperfineSystem {
        HyperfineSystem::nitrogen14(19.0, 91.0).unwrap()
    }

    #[test]
    fn rejects_invalid_systems() {
        assert!(HyperfineSystem::new(0, 1.0, 2.0, "").is_err());
        assert!(HyperfineSystem::new(1, 1.0, -2.0, "").is_err());
        assert!(HyperfineSystem::new(1, 1.0, 0.0, "").is_err());
        assert!(HyperfineSystem::new(1, -1.0, 2.0, "").is_err());
    }

    #[test]
    fn mixing_angle_examples() {
        assert_eq!(mixing_angle(&n15(), 0).unwrap(), FRAC_PI_2);
        let expected = (2.0 * 2f64.sqrt() * 19.0 / 91.0).atan();
        let alpha = mixing_angle(&n14(), 1).unwrap();
        assert!((alpha - expected).abs() < 1e-14);
        assert!((alpha - 0.53344).abs() < 5e-6);
        let flat = HyperfineSystem::nitrogen14(0.0, 91.0).unwrap();
        assert_eq!(mixing_angle(&flat, 1).unwrap(), 0.0);
    }

    #[test]
    fn mixing_angle_rejects_stretched_and_parity() {
        let err = mixing_angle(&n14(), 3).unwrap_err().to_string();
        assert!(err.contains("-1/2 ..= +1/2"), "{err}");
        assert!(mixing_angle(&n14(), 0).is_err());
        assert!(mixing_angle(&n15(), 1).is_err());
    }

    #[test]
    fn n15_energies() {
        let mut e: Vec<f64> = energy_levels(&n15()).iter().map(|l| l.energy).collect();
        e.sort_by(f64::total_cmp);
        let expected = [-46.0, -14.0, 30.0, 30.0];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn n14_energies() {
        let mut e: Vec<f64> = energy_levels(&n14()).iter().map(|l| l.energy).collect();
        e.sort_by(f64::total_cmp);
        let expected = [-49.17, -49.17, 3.67, 3.67, 45.5, 45.5];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 0.01, "{e:?}");
        }
    }

    #[test]
    fn branch_membership() {
        let sys = HyperfineSystem::new(3, 10.0, 50.0, "").unwrap();
        let levels = energy_levels(&sys);
        assert_eq!(levels.len(), 8);
        let threshold = -sys.a_par() / 4.0;
        for l in &levels {
            match l.branch {
                Branch::Upper => assert!(l.energy > threshold),
                Branch::Lower => assert!(l.energy < threshold),
                Branch::Special => {
                    assert_eq!(l.m_t_twice.unsigned_abs(), 4);
                    assert_eq!(l.energy, sys.a_par() / 2.0 * (2.0 - 0.5));
                }
            }
        }
        assert_eq!(levels.iter().filter(|l| l.branch == Branch::Upper).count(), 3);
        assert_eq!(levels.iter().filter(|l| l.branch == Branch::Lower).count(), 3);
    }

    #[test]
    fn isotropic_splitting_is_three_halves() {
        let sys = HyperfineSystem::nitrogen14(7.0, 7.0).unwrap();
        let e = diagonalize_oracle(&sys);
        let distinct_gap = e.last().unwrap() - e.first().unwrap();
        assert!((distinct_gap - 10.5).abs() < 1e-12);
        let observable: Vec<_> = observable_transitions(&sys).into_iter().filter(|t| t.xi_total > 1e-12).collect();
        assert_eq!(observable.len(), 1);
        assert!((observable[0].freq - 10.5).abs() < 1e-9);
    }

    #[test]
    fn n15_transitions_and_ratio() {
        let t = transitions(&n15());
        let freqs: Vec<f64> = t.iter().map(|t| t.freq).collect();
        assert_eq!(t.len(), 3, "{freqs:?}");
        for (f, e) in freqs.iter().zip([32.0, 44.0, 76.0]) {
            assert!((f - e).abs() < 1e-12);
        }
        let xi: Vec<f64> = t.iter().map(|t| t.xi_total).collect();
        assert!((xi[1] / xi[0] - 2.0).abs() < 1e-12);
        assert!((xi[2] / xi[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn n14_transitions() {
        let t = observable_transitions(&n14());
        assert_eq!(t.len(), 3);
        for (tr, e) in t.iter().zip([41.8, 52.8, 94.7]) {
            assert!((tr.freq - e).abs() < 0.1);
        }
        // values from a dense eigenvector computation of 4·Σ_j |<a|S'_j|b>|²
        for (tr, e) in t.iter().zip([0.27788, 0.77572, 3.72212]) {
            assert!((tr.xi_total - e).abs() < 5e-4, "{}", tr.xi_total);
        }
        assert!(t[2].xi_total > t[0].xi_total.max(t[1].xi_total));
    }

    #[test]
    fn zero_frequency_transitions_are_kept_but_unobservable() {
        let t = transitions(&n14());
        let zero: Vec<_> = t.iter().filter(|t| !t.observable).collect();
        assert_eq!(zero.len(), 1);
        assert!(zero[0].freq.abs() < 1e-9);
        assert!(zero[0].members.len() >= 2);
    }

    #[test]
    fn closed_forms() {
        let [w1, w2, w3] = peak_positions_closed_form(Isotope::N14, 19.0, 91.0).unwrap();
        assert!((w1 - 41.83).abs() < 0.01 && (w2 - 52.84).abs() < 0.01 && (w3 - 94.67).abs() < 0.01);
        assert_eq!(peak_positions_closed_form(Isotope::N15, 32.0, 120.0).unwrap(), [32.0, 44.0, 76.0]);
        assert!(peak_positions_closed_form(Isotope::N15, 50.0, 40.0).is_err());
    }

    #[test]
    fn half_integer_formatting() {
        assert_eq!(format_half_integer(1), "+1/2");
        assert_eq!(format_half_integer(-3), "-3/2");
        assert_eq!(format_half_integer(2), "+1");
        assert_eq!(format_half_integer(0), "0");
    }
}
