//! Simulation and analysis toolkit for zero-field EPR detected through NV-center
//! cross-relaxation.
//!
//! The crate is organised bottom-up:
//!
//! - [`spin`]: the hyperfine target Hamiltonian, its eigenlevels and the
//!   selection-rule-allowed transitions with their relative strengths ξ.
//! - [`geometry`]: NV–target dipolar tensor, target orientation, reduction
//!   matrices and the lab-frame projection giving the transverse coupling.
//! - [`relaxometry`]: single-pair cross-relaxation signal model.
//! - [`ensemble`]: half-space ensemble average, closed form and Monte Carlo.
//! - [`spectrum`]: synthetic spectra, blank subtraction and CSV/JSON I/O.
//! - [`fit`]: Levenberg–Marquardt engine and the peak/kinetics models.
//! - [`parallel`]: deterministic chunked execution, rayon-backed when the
//!   `parallel` feature is enabled.
//!
//! All frequencies are ordinary frequencies in MHz; relaxation rates that enter
//! exponentials with times in ms are in ms⁻¹.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod parallel;
pub mod relaxometry;
pub mod spectrum;
pub mod spin;

pub use error::{Error, Result};
