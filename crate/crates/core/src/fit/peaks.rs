//! Multi-peak fits of spectra on a baseline.
//!
//! Starting centers come from local maxima of the baseline-corrected trace
//! smoothed by a 3-point moving average. Candidates are taken in order of
//! decreasing height; a candidate within max(2 grid steps, HWHM) of an
//! accepted peak is skipped. Missing peaks are filled from user-supplied centers, and as a last
//! resort by splitting the strongest peak (with a warning).

use serde::{Deserialize, Serialize};

use super::lm::{lm_fit_with, FitModel, FitResult, LmOptions};
use super::models::{Baseline, MultiPeakModel, PeakShape};
use crate::spectrum::Spectrum;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "centers", rename_all = "snake_case")]
pub enum InitStrategy {
    LocalMaxima,
    /// Local maxima, topped up from these centers when too few are found.
    LocalMaximaWithFallback(Vec<f64>),
    /// Exactly these centers (one per peak).
    Centers(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFitOptions {
    pub shape: PeakShape,
    pub baseline: Baseline,
    pub n_peaks: usize,
    pub init: InitStrategy,
    /// Box on the width parameter (σ or HWHM), MHz. Defaults to
    /// [0.1 × smallest grid step, full span].
    pub width_bounds: Option<(f64, f64)>,
    pub lm: LmOptions,
}

impl PeakFitOptions {
    pub fn new(shape: PeakShape, baseline: Baseline, n_peaks: usize, init: InitStrategy) -> Self {
        Self { shape, baseline, n_peaks, init, width_bounds: None, lm: LmOptions::default() }
    }
}

/// m·f + c + Σ Aᵢ exp(−(f−μᵢ)²/2σᵢ²)
pub fn fit_gaussian_peaks_slanted(spec: &Spectrum, n_peaks: usize, init: InitStrategy) -> Result<FitResult> {
    fit_peaks(spec, &PeakFitOptions::new(PeakShape::Gaussian, Baseline::Slanted, n_peaks, init))
}

/// m·f + c + Σ Aᵢ γᵢ²/(γᵢ² + (f−μᵢ)²)
pub fn fit_lorentzian_peaks_slanted(spec: &Spectrum, n_peaks: usize, init: InitStrategy) -> Result<FitResult> {
    fit_peaks(spec, &PeakFitOptions::new(PeakShape::Lorentzian, Baseline::Slanted, n_peaks, init))
}

/// Two Lorentzians on a constant offset.
pub fn fit_double_lorentzian(spec: &Spectrum) -> Result<FitResult> {
    fit_peaks(spec, &PeakFitOptions::new(PeakShape::Lorentzian, Baseline::Offset, 2, InitStrategy::LocalMaxima))
}

pub fn fit_peaks(spec: &Spectrum, opts: &PeakFitOptions) -> Result<FitResult> {
    spec.validate()?;
    if opts.n_peaks == 0 {
        return Err(Error::invalid("at least one peak is required"));
    }
    let model = build_model(spec, opts)?;
    if spec.len() <= model.n_params() {
        return Err(Error::invalid(format!(
            "{} points cannot constrain {} parameters",
            spec.len(),
            model.n_params()
        )));
    }
    let (init, mut warnings) = initial_guess(spec, &model, &opts.init)?;
    let mut fit = lm_fit_with(&model, &spec.freqs, &spec.values, spec.sigma.as_deref(), &init, &opts.lm)?;
    sort_peaks_by_center(&mut fit, &model);
    for (k, pair) in fit.peaks.windows(2).enumerate() {
        if pair[1].center - pair[0].center < pair[0].fwhm.min(pair[1].fwhm) / 4.0 {
            fit.ill_conditioned = true;
            warnings.push(format!("peaks {} and {} are unresolved (closer than FWHM/4)", k + 1, k + 2));
        }
    }
    for (k, peak) in fit.peaks.iter().enumerate() {
        if peak.amplitude.abs() < 2.0 * peak.amplitude_err {
            fit.ill_conditioned = true;
            warnings.push(format!("peak {} amplitude is below 2 sigma", k + 1));
        }
    }
    warnings.append(&mut fit.warnings);
    fit.warnings = warnings;
    Ok(fit)
}

pub fn build_model(spec: &Spectrum, opts: &PeakFitOptions) -> Result<MultiPeakModel> {
    let (lo, hi) = (spec.freqs[0], spec.freqs[spec.len() - 1]);
    let width_bounds = match opts.width_bounds {
        Some((a, b)) if a > 0.0 && b > a => (a, b),
        Some((a, b)) => return Err(Error::invalid(format!("invalid width bounds [{a}, {b}]"))),
        None => (0.1 * min_step(&spec.freqs), hi - lo),
    };
    Ok(MultiPeakModel {
        shape: opts.shape,
        baseline: opts.baseline,
        n_peaks: opts.n_peaks,
        center_bounds: (lo, hi),
        width_bounds,
    })
}

fn min_step(freqs: &[f64]) -> f64 {
    freqs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Three-point moving average; the end points average the two available values.
pub fn moving_average(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Interior local maxima of `smoothed`, strongest first, at least
/// `min_separation` indices apart.
pub fn pick_maxima(smoothed: &[f64], min_separation: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (1..smoothed.len().saturating_sub(1))
        .filter(|&i| smoothed[i] > smoothed[i - 1] && smoothed[i] >= smoothed[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| smoothed[b].total_cmp(&smoothed[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::new();
    for c in candidates {
        if picked.iter().all(|&p| p.abs_diff(c) > min_separation) {
            picked.push(c);
        }
    }
    picked
}

/// Up to `n` peak indices, strongest first. A candidate is skipped when it
/// lies within max(2 grid steps, HWHM) of an accepted peak.
pub fn pick_peaks(freqs: &[f64], smoothed: &[f64], n: usize) -> Vec<usize> {
    let step = min_step(freqs);
    let mut accepted: Vec<(usize, f64)> = Vec::new();
    for c in pick_maxima(smoothed, 2) {
        if accepted.len() == n {
            break;
        }
        if accepted.iter().all(|&(a, radius)| (freqs[c] - freqs[a]).abs() > radius) {
            let radius = half_width_at(freqs, smoothed, c, f64::INFINITY).max(2.0 * step);
            accepted.push((c, radius));
        }
    }
    accepted.into_iter().map(|(i, _)| i).collect()
}

fn initial_baseline(spec: &Spectrum, baseline: Baseline) -> Vec<f64> {
    let n = spec.len();
    let k = if n >= 6 { 2 } else { 1 };
    let mean = |r: std::ops::Range<usize>| {
        let len = r.len() as f64;
        (spec.freqs[r.clone()].iter().sum::<f64>() / len, spec.values[r].iter().sum::<f64>() / len)
    };
    let (x0, y0) = mean(0..k);
    let (x1, y1) = mean(n - k..n);
    match baseline {
        Baseline::Offset => vec![(y0 + y1) / 2.0],
        Baseline::Slanted => {
            let slope = (y1 - y0) / (x1 - x0);
            vec![slope, y0 - slope * x0]
        }
    }
}

fn initial_guess(spec: &Spectrum, model: &MultiPeakModel, strategy: &InitStrategy) -> Result<(Vec<f64>, Vec<String>)> {
    let n_peaks = model.n_peaks;
    let mut warnings = Vec::new();
    let base = initial_baseline(spec, model.baseline);
    let base_at = |f: f64| match model.baseline {
        Baseline::Offset => base[0],
        Baseline::Slanted => base[0] * f + base[1],
    };
    let residual: Vec<f64> = spec.freqs.iter().zip(&spec.values).map(|(f, y)| y - base_at(*f)).collect();
    let smoothed = moving_average(&residual);
    let nearest = |f: f64| {
        spec.freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    let (lo, hi) = model.center_bounds;
    let check_centers = |centers: &[f64]| -> Result<()> {
        if let Some(c) = centers.iter().find(|c| !(**c >= lo && **c <= hi)) {
            return Err(Error::invalid(format!("initial center {c} MHz outside the grid [{lo}, {hi}]")));
        }
        Ok(())
    };

    let mut centers: Vec<f64> = match strategy {
        InitStrategy::Centers(c) => {
            if c.len() != n_peaks {
                return Err(Error::invalid(format!("{} centers given for {n_peaks} peaks", c.len())));
            }
            check_centers(c)?;
            c.clone()
        }
        InitStrategy::LocalMaxima | InitStrategy::LocalMaximaWithFallback(_) => {
            let mut found: Vec<f64> =
                pick_peaks(&spec.freqs, &smoothed, n_peaks).into_iter().map(|i| spec.freqs[i]).collect();
            if let InitStrategy::LocalMaximaWithFallback(fallback) = strategy {
                check_centers(fallback)?;
                let sep = 2.0 * min_step(&spec.freqs);
                for &c in fallback {
                    if found.len() < n_peaks && found.iter().all(|f| (f - c).abs() > sep) {
                        found.push(c);
                    }
                }
            }
            found
        }
    };
    if centers.len() < n_peaks {
        warnings.push(format!(
            "found {} of {n_peaks} peaks; remaining starts split from the strongest peak",
            centers.len()
        ));
        let anchor = centers.first().copied().unwrap_or_else(|| {
            let i = (0..smoothed.len()).max_by(|a, b| smoothed[*a].total_cmp(&smoothed[*b])).unwrap_or(0);
            spec.freqs[i]
        });
        if centers.is_empty() {
            centers.push(anchor);
        }
        let hw = half_width_at(&spec.freqs, &smoothed, nearest(anchor), f64::INFINITY).max(min_step(&spec.freqs));
        let mut k = 1.0;
        while centers.len() < n_peaks {
            let c = (anchor + k * 0.5 * hw).clamp(lo, hi);
            centers.push(c);
            k = if k > 0.0 { -k } else { -k + 1.0 };
        }
    }
    centers.sort_by(f64::total_cmp);

    let mut p = base;
    for (k, &c) in centers.iter().enumerate() {
        let idx = nearest(c);
        let gap = centers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, o)| (o - c).abs() / 2.0)
            .fold(f64::INFINITY, f64::min);
        let hwhm = half_width_at(&spec.freqs, &smoothed, idx, gap);
        let width = (hwhm * 2.0 / model.shape.fwhm_per_width()).clamp(model.width_bounds.0, model.width_bounds.1);
        let amplitude = residual[idx].max(smoothed[idx]);
        p.extend([amplitude, c, width]);
    }
    Ok((p, warnings))
}

/// Half width at half maximum of the peak at `idx` in `s`, by walking outward
/// until the trace drops below half height or `limit` MHz is reached.
fn half_width_at(freqs: &[f64], s: &[f64], idx: usize, limit: f64) -> f64 {
    let half = s[idx] / 2.0;
    let step = min_step(freqs);
    let walk = |dir: isize| -> Option<f64> {
        let mut i = idx as isize;
        loop {
            let next = i + dir;
            if next < 0 || next as usize >= s.len() {
                return None;
            }
            let (a, b) = (i as usize, next as usize);
            if (freqs[b] - freqs[idx]).abs() > limit {
                return Some(limit);
            }
            if s[b] <= half {
                let t = if s[a] != s[b] { (s[a] - half) / (s[a] - s[b]) } else { 0.5 };
                return Some((freqs[a] + t * (freqs[b] - freqs[a]) - freqs[idx]).abs());
            }
            i = next;
        }
    };
    match (walk(-1), walk(1)) {
        (Some(l), Some(r)) => ((l + r) / 2.0).max(step / 2.0),
        (Some(w), None) | (None, Some(w)) => w.max(step / 2.0),
        (None, None) => (freqs[freqs.len() - 1] - freqs[0]) / 4.0,
    }
}

/// Reorders the peak parameter triples (and the covariance) by ascending center.
fn sort_peaks_by_center(fit: &mut FitResult, model: &MultiPeakModel) {
    let nb = model.baseline.n_params();
    let mut order: Vec<usize> = (0..model.n_peaks).collect();
    order.sort_by(|&a, &b| fit.params[nb + 3 * a + 1].total_cmp(&fit.params[nb + 3 * b + 1]));
    if order.iter().enumerate().all(|(i, &k)| i == k) {
        return;
    }
    let mut perm: Vec<usize> = (0..nb).collect();
    for &k in &order {
        perm.extend([nb + 3 * k, nb + 3 * k + 1, nb + 3 * k + 2]);
    }
    fit.params = perm.iter().map(|&i| fit.params[i]).collect();
    fit.uncertainties = perm.iter().map(|&i| fit.uncertainties[i]).collect();
    fit.covariance = perm.iter().map(|&i| perm.iter().map(|&j| fit.covariance[i][j]).collect()).collect();
    fit.peaks = order.iter().map(|&k| fit.peaks[k].clone()).collect();
}
