//! Sampled contrast spectra: synthesis, blank subtraction and file I/O.
//!
//! CSV files carry the columns `freq_mhz,contrast,sigma` (sigma may be empty)
//! with every number written to 17 significant digits, so re-reading a file
//! reproduces the values bit for bit. Provenance lives in a JSON sidecar.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{ensemble_contrast, EnsembleParams};
use crate::parallel::{map_ordered, Execution};
use crate::relaxometry::SensorParams;
use crate::spin::{observable_transitions, HyperfineSystem};
use crate::{Error, Result};

/// Default sweep: 30 points spanning 20–130 MHz.
pub const DEFAULT_GRID: (f64, f64, usize) = (20.0, 130.0, 30);

pub const CSV_HEADER: [&str; 3] = ["freq_mhz", "contrast", "sigma"];

/// Provenance attached to a spectrum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Only filled when the caller supplies one; synthesis never reads the clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// MHz, strictly increasing.
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(freqs: Vec<f64>, values: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        let s = Self { freqs, values, sigma, meta: SpectrumMeta::default() };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.freqs)?;
        if self.values.len() != self.freqs.len() {
            return Err(Error::invalid(format!(
                "{} values for {} frequencies",
                self.values.len(),
                self.freqs.len()
            )));
        }
        if let Some(sigma) = &self.sigma {
            if sigma.len() != self.freqs.len() {
                return Err(Error::invalid(format!("{} sigmas for {} frequencies", sigma.len(), self.freqs.len())));
            }
            if let Some(i) = sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::invalid(format!("sigma[{i}] = {} must be positive", sigma[i])));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn with_meta(mut self, meta: SpectrumMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for i in 0..self.len() {
            let sigma = self.sigma.as_ref().map(|s| format_f64(s[i])).unwrap_or_default();
            w.write_record([format_f64(self.freqs[i]), format_f64(self.values[i]), sigma])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        let column = |name: &str| headers.iter().position(|h| h == name);
        let (Some(fc), Some(vc)) = (column(CSV_HEADER[0]), column(CSV_HEADER[1])) else {
            return Err(Error::invalid(format!(
                "CSV header must contain freq_mhz and contrast, found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        };
        let sc = column(CSV_HEADER[2]);
        let (mut freqs, mut values, mut sigmas) = (Vec::new(), Vec::new(), Vec::new());
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let field = |c: usize| -> Result<f64> {
                let raw = record.get(c).unwrap_or("");
                raw.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("row {}: cannot parse {raw:?} as a number", line + 2)))
            };
            freqs.push(field(fc)?);
            values.push(field(vc)?);
            match sc.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
                Some(_) => sigmas.push(Some(field(sc.unwrap())?)),
                None => sigmas.push(None),
            }
        }
        let sigma = if !sigmas.is_empty() && sigmas.iter().all(Option::is_some) {
            Some(sigmas.into_iter().flatten().collect())
        } else if sigmas.iter().any(Option::is_some) {
            return Err(Error::invalid("sigma column is only partially filled"));
        } else {
            None
        };
        Spectrum::new(freqs, values, sigma)
    }

    pub fn save(&self, csv_path: &Path, sidecar_path: Option<&Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(csv_path, buf)?;
        if let Some(path) = sidecar_path {
            let sidecar = Sidecar { format: "zfepr-spectrum/1", n_points: self.len(), meta: &self.meta };
            let mut text = serde_json::to_string_pretty(&sidecar)?;
            text.push('\n');
            std::fs::write(path, text)?;
        }
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(csv_path)?)
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    format: &'static str,
    n_points: usize,
    meta: &'a SpectrumMeta,
}

/// Seventeen significant digits: enough to round-trip any f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn validate_grid(freqs: &[f64]) -> Result<()> {
    if freqs.len() < 2 {
        return Err(Error::invalid(format!("a spectrum needs at least 2 points, got {}", freqs.len())));
    }
    if let Some(i) = freqs.iter().position(|f| !f.is_finite()) {
        return Err(Error::invalid(format!("frequency {i} is not finite")));
    }
    if let Some(i) = freqs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "frequency grid not strictly increasing at index {}: {} -> {} MHz",
            i + 1,
            freqs[i],
            freqs[i + 1]
        )));
    }
    Ok(())
}

/// `points` evenly spaced frequencies from `start` to `stop` inclusive.
pub fn frequency_grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(stop > start) {
        return Err(Error::invalid(format!("invalid sweep {start}..{stop} MHz with {points} points")));
    }
    let step = (stop - start) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| if i + 1 == points { stop } else { start + step * i as f64 }).collect();
    validate_grid(&grid)?;
    Ok(grid)
}

pub fn default_grid() -> Vec<f64> {
    let (a, b, n) = DEFAULT_GRID;
    frequency_grid(a, b, n).expect("default grid is valid")
}

/// Instrument background added to a synthetic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    None,
    Slanted { slope_per_mhz: f64, offset: f64 },
    BlankTrace { reference: Spectrum },
}

impl BaselineModel {
    pub fn evaluate(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        match self {
            BaselineModel::None => Ok(vec![0.0; freqs.len()]),
            BaselineModel::Slanted { slope_per_mhz, offset } => {
                Ok(freqs.iter().map(|f| slope_per_mhz * f + offset).collect())
            }
            BaselineModel::BlankTrace { reference } => {
                check_same_grid(freqs, &reference.freqs)?;
                Ok(reference.values.clone())
            }
        }
    }
}

fn check_same_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if let Some(index) = a.iter().zip(b).position(|(x, y)| x.to_bits() != y.to_bits()) {
        return Err(Error::GridMismatch { index, left: a[index], right: b[index] });
    }
    if a.len() != b.len() {
        let index = a.len().min(b.len());
        let pick = |v: &[f64]| v.get(index).copied().unwrap_or(f64::NAN);
        return Err(Error::GridMismatch { index, left: pick(a), right: pick(b) });
    }
    Ok(())
}

/// One Lorentzian line of the synthetic spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    /// MHz
    pub center: f64,
    /// Peak contrast.
    pub height: f64,
    /// Half width at half maximum Γ2, MHz.
    pub hwhm: f64,
}

impl SpectralLine {
    pub fn eval(&self, f: f64) -> f64 {
        let d = f - self.center;
        self.height * self.hwhm * self.hwhm / (self.hwhm * self.hwhm + d * d)
    }
}

/// Lines of every observable transition with non-zero strength. The ensemble's
/// κ, h, α and Γ2 are used; Γ1′ comes from the sensor.
pub fn spectral_lines(sys: &HyperfineSystem, ens: &EnsembleParams, sensor: &SensorParams) -> Result<Vec<SpectralLine>> {
    observable_transitions(sys)
        .into_iter()
        .filter(|t| t.xi_total > 0.0)
        .map(|t| {
            Ok(SpectralLine {
                center: t.freq,
                height: ensemble_contrast(&ens.with_xi(t.xi_total), sensor.gamma1_prime)?,
                hwhm: ens.gamma2_total,
            })
        })
        .collect()
}

/// Synthetic contrast spectrum: Σ lines + baseline + N(0, noise_sigma²).
///
/// Noise is drawn sequentially from ChaCha8 seeded with `seed`; the noiseless
/// part is evaluated per frequency, in parallel when enabled.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_spectrum(
    sys: &HyperfineSystem,
    ens: &EnsembleParams,
    sensor: &SensorParams,
    grid: &[f64],
    baseline: &BaselineModel,
    noise_sigma: f64,
    seed: u64,
    exec: Execution,
) -> Result<Spectrum> {
    validate_grid(grid)?;
    sensor.validate()?;
    let lines = spectral_lines(sys, ens, sensor)?;
    let mut spectrum = synthesize_lines(&lines, grid, baseline, noise_sigma, seed, exec)?;
    spectrum.meta.params = serde_json::json!({
        "system": sys,
        "ensemble": ens,
        "sensor": sensor,
        "baseline": baseline_summary(baseline),
        "noise_sigma": noise_sigma,
        "lines": lines,
    });
    Ok(spectrum)
}

/// Σ lines + baseline + noise on `grid`, the core of [`synthesize_spectrum`].
pub fn synthesize_lines(
    lines: &[SpectralLine],
    grid: &[f64],
    baseline: &BaselineModel,
    noise_sigma: f64,
    seed: u64,
    exec: Execution,
) -> Result<Spectrum> {
    validate_grid(grid)?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let background = baseline.evaluate(grid)?;
    let mut values = map_ordered(grid, exec, |&f| lines.iter().map(|l| l.eval(f)).sum::<f64>());
    for (v, b) in values.iter_mut().zip(&background) {
        *v += b;
    }
    let sigma = if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in values.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise_sigma * z;
        }
        Some(vec![noise_sigma; grid.len()])
    } else {
        None
    };
    let meta = SpectrumMeta { params: serde_json::Value::Null, seed: Some(seed), timestamp: None };
    Ok(Spectrum { freqs: grid.to_vec(), values, sigma, meta })
}

fn baseline_summary(b: &BaselineModel) -> serde_json::Value {
    match b {
        BaselineModel::BlankTrace { reference } => serde_json::json!({"kind": "blank_trace", "n_points": reference.len()}),
        other => serde_json::to_value(other).unwrap_or(serde_json::Value::Null),
    }
}

/// Noise level giving the requested peak signal-to-noise ratio.
pub fn noise_sigma_for_snr(lines: &[SpectralLine], grid: &[f64], snr: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::invalid(format!("SNR {snr} must be positive")));
    }
    let peak = grid
        .iter()
        .map(|&f| lines.iter().map(|l| l.eval(f)).sum::<f64>())
        .fold(0.0_f64, f64::max);
    Ok(peak / snr)
}

/// Pointwise signal − blank; uncertainties combine in quadrature.
pub fn subtract_blank(signal: &Spectrum, blank: &Spectrum) -> Result<Spectrum> {
    check_same_grid(&signal.freqs, &blank.freqs)?;
    let values = signal.values.iter().zip(&blank.values).map(|(s, b)| s - b).collect();
    let sigma = match (&signal.sigma, &blank.sigma) {
        (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x.hypot(*y)).collect()),
        (Some(a), None) => Some(a.clone()),
        (None, Some(b)) => Some(b.clone()),
        (None, None) => None,
    };
    let meta = SpectrumMeta {
        params: serde_json::json!({ "operation": "subtract_blank", "signal": signal.meta, "blank": blank.meta }),
        seed: None,
        timestamp: None,
    };
    Ok(Spectrum { freqs: signal.freqs.clone(), values, sigma, meta })
}
