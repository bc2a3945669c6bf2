//! Nonlinear least squares and the analysis models built on it.

pub mod kinetics;
pub mod lm;
pub mod models;
pub mod peaks;

pub use kinetics::{fit_exponential_decay, fit_powerlaw_loglog, kinetics_series, KineticsReport, KineticsRow, MIN_DECAY_POINTS};
pub use lm::{gradient_relative_error, lm_fit, lm_fit_with, FitModel, FitResult, LmOptions, PeakSummary, Termination};
pub use models::{Baseline, ExponentialDecay, Line, MultiPeakModel, PeakShape};
pub use peaks::{
    fit_double_lorentzian, fit_gaussian_peaks_slanted, fit_lorentzian_peaks_slanted, fit_peaks, InitStrategy,
    PeakFitOptions,
};
