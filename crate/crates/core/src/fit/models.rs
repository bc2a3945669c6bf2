//! Curve models used in the analysis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{propagate, FitModel, PeakSummary};

/// 2√(2 ln 2): Gaussian FWHM over σ.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakShape {
    /// A·exp(−(f−μ)²/2σ²), width parameter σ.
    Gaussian,
    /// A·γ²/(γ² + (f−μ)²), width parameter the HWHM γ.
    Lorentzian,
}

impl PeakShape {
    fn width_name(self) -> &'static str {
        match self {
            PeakShape::Gaussian => "sigma",
            PeakShape::Lorentzian => "hwhm",
        }
    }

    pub fn fwhm_per_width(self) -> f64 {
        match self {
            PeakShape::Gaussian => GAUSSIAN_FWHM_PER_SIGMA,
            PeakShape::Lorentzian => 2.0,
        }
    }

    /// Area over amplitude·width.
    pub fn area_per_amplitude_width(self) -> f64 {
        match self {
            PeakShape::Gaussian => (2.0 * std::f64::consts::PI).sqrt(),
            PeakShape::Lorentzian => std::f64::consts::PI,
        }
    }

    pub fn eval(self, amplitude: f64, center: f64, width: f64, f: f64) -> f64 {
        let d = f - center;
        match self {
            PeakShape::Gaussian => amplitude * (-d * d / (2.0 * width * width)).exp(),
            PeakShape::Lorentzian => amplitude * width * width / (width * width + d * d),
        }
    }

    /// (∂/∂A, ∂/∂μ, ∂/∂w)
    fn partials(self, amplitude: f64, center: f64, width: f64, f: f64) -> [f64; 3] {
        let d = f - center;
        match self {
            PeakShape::Gaussian => {
                let w2 = width * width;
                let e = (-d * d / (2.0 * w2)).exp();
                [e, amplitude * e * d / w2, amplitude * e * d * d / (w2 * width)]
            }
            PeakShape::Lorentzian => {
                let w2 = width * width;
                let q = w2 + d * d;
                let q2 = q * q;
                [w2 / q, amplitude * w2 * 2.0 * d / q2, amplitude * 2.0 * width * d * d / q2]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Constant c.
    Offset,
    /// m·f + c.
    Slanted,
}

impl Baseline {
    pub fn n_params(self) -> usize {
        match self {
            Baseline::Offset => 1,
            Baseline::Slanted => 2,
        }
    }
}

/// Baseline plus `n_peaks` peaks of one shape.
///
/// Parameters: `[slope,] offset`, then `amplitude_k, center_k, <width>_k` per peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPeakModel {
    pub shape: PeakShape,
    pub baseline: Baseline,
    pub n_peaks: usize,
    pub center_bounds: (f64, f64),
    pub width_bounds: (f64, f64),
}

impl MultiPeakModel {
    pub fn peak_offset(&self, k: usize) -> usize {
        self.baseline.n_params() + 3 * k
    }

    fn baseline_value(&self, p: &[f64], f: f64) -> f64 {
        match self.baseline {
            Baseline::Offset => p[0],
            Baseline::Slanted => p[0] * f + p[1],
        }
    }

    /// Peak-only part of the curve.
    pub fn peaks_only(&self, p: &[f64], f: f64) -> f64 {
        (0..self.n_peaks)
            .map(|k| {
                let o = self.peak_offset(k);
                self.shape.eval(p[o], p[o + 1], p[o + 2], f)
            })
            .sum()
    }
}

impl FitModel for MultiPeakModel {
    fn name(&self) -> String {
        let shape = match self.shape {
            PeakShape::Gaussian => "gaussian",
            PeakShape::Lorentzian => "lorentzian",
        };
        let base = match self.baseline {
            Baseline::Offset => "offset",
            Baseline::Slanted => "slanted",
        };
        format!("{}x{shape}+{base}", self.n_peaks)
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = match self.baseline {
            Baseline::Offset => vec!["offset".to_string()],
            Baseline::Slanted => vec!["slope".to_string(), "offset".to_string()],
        };
        for k in 1..=self.n_peaks {
            names.push(format!("amplitude_{k}"));
            names.push(format!("center_{k}"));
            names.push(format!("{}_{k}", self.shape.width_name()));
        }
        names
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let free = (f64::NEG_INFINITY, f64::INFINITY);
        let mut b = vec![free; self.baseline.n_params()];
        for _ in 0..self.n_peaks {
            b.extend([free, self.center_bounds, self.width_bounds]);
        }
        b
    }

    fn eval(&self, p: &[f64], f: f64) -> f64 {
        self.baseline_value(p, f) + self.peaks_only(p, f)
    }

    fn gradient(&self, p: &[f64], f: f64, g: &mut [f64]) {
        match self.baseline {
            Baseline::Offset => g[0] = 1.0,
            Baseline::Slanted => {
                g[0] = f;
                g[1] = 1.0;
            }
        }
        for k in 0..self.n_peaks {
            let o = self.peak_offset(k);
            g[o..o + 3].copy_from_slice(&self.shape.partials(p[o], p[o + 1], p[o + 2], f));
        }
    }

    fn peaks(&self, p: &[f64], cov: &DMatrix<f64>) -> Vec<PeakSummary> {
        let fw = self.shape.fwhm_per_width();
        let ar = self.shape.area_per_amplitude_width();
        (0..self.n_peaks)
            .map(|k| {
                let o = self.peak_offset(k);
                let (a, mu, w) = (p[o], p[o + 1], p[o + 2]);
                let sd = |i: usize| cov[(i, i)].max(0.0).sqrt();
                PeakSummary {
                    center: mu,
                    center_err: sd(o + 1),
                    amplitude: a,
                    amplitude_err: sd(o),
                    fwhm: fw * w,
                    fwhm_err: fw * sd(o + 2),
                    area: ar * a * w,
                    area_err: propagate(cov, &[(o, ar * w), (o + 2, ar * a)]).sqrt(),
                }
            })
            .collect()
    }
}

/// y = A·exp(−t/t_d) + y₀; parameters `amplitude, t_d, y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialDecay {
    /// Lower bound on t_d, keeps the model finite.
    pub min_decay_time: f64,
}

impl FitModel for ExponentialDecay {
    fn name(&self) -> String {
        "exponential_decay".into()
    }

    fn param_names(&self) -> Vec<String> {
        vec!["amplitude".into(), "t_d".into(), "y0".into()]
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let free = (f64::NEG_INFINITY, f64::INFINITY);
        vec![free, (self.min_decay_time, f64::INFINITY), free]
    }

    fn eval(&self, p: &[f64], t: f64) -> f64 {
        p[0] * (-t / p[1]).exp() + p[2]
    }

    fn gradient(&self, p: &[f64], t: f64, g: &mut [f64]) {
        let e = (-t / p[1]).exp();
        g[0] = e;
        g[1] = p[0] * e * t / (p[1] * p[1]);
        g[2] = 1.0;
    }
}

/// y = a·x + b; parameters `a, b`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Line;

impl FitModel for Line {
    fn name(&self) -> String {
        "line".into()
    }

    fn param_names(&self) -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn eval(&self, p: &[f64], x: f64) -> f64 {
        p[0] * x + p[1]
    }

    fn gradient(&self, _p: &[f64], x: f64, g: &mut [f64]) {
        g[0] = x;
        g[1] = 1.0;
    }
}
