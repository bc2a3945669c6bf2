//! Time series of spectra: per-spectrum peak fits, exponential decay of the
//! total peak area, and the log-log power law of decay time vs illumination.

use serde::{Deserialize, Serialize};

use super::lm::{lm_fit, FitResult};
use super::models::{ExponentialDecay, Line};
use super::peaks::{fit_peaks, PeakFitOptions};
use crate::parallel::{map_ordered, Execution};
use crate::spectrum::Spectrum;
use crate::{Error, Result};

/// Fewest points that leave the three decay parameters one degree of freedom.
pub const MIN_DECAY_POINTS: usize = 4;

/// y = A·exp(−t/t_d) + y₀ with parameters `amplitude, t_d, y0`.
///
/// Constant input cannot fix t_d; the result is then marked `degenerate`.
pub fn fit_exponential_decay(t: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    if t.len() < MIN_DECAY_POINTS {
        return Err(Error::invalid(format!("exponential decay needs at least {MIN_DECAY_POINTS} points, got {}", t.len())));
    }
    if t.len() != y.len() {
        return Err(Error::invalid(format!("{} times but {} values", t.len(), y.len())));
    }
    let (t_min, t_max) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = t_max - t_min;
    if !(span > 0.0) {
        return Err(Error::invalid("decay times must not all be equal"));
    }
    let model = ExponentialDecay { min_decay_time: 1e-6 * span };
    let init = decay_guess(t, y, span, model.min_decay_time);
    let mut fit = lm_fit(&model, t, y, sigma, &init)?;
    let (y_min, y_max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let flat = y_max - y_min <= 1e-12 * y_max.abs().max(y_min.abs()).max(f64::MIN_POSITIVE);
    if flat || fit.rank_deficient || !fit.active_bounds.is_empty() {
        fit.degenerate = true;
        fit.warnings.push("decay time is not constrained by the data".into());
    }
    Ok(fit)
}

/// Starting point from a log-linear regression after removing an asymptote
/// placed just beyond the data range.
fn decay_guess(t: &[f64], y: &[f64], span: f64, min_td: f64) -> Vec<f64> {
    let (first, last) = ordered_ends(t, y);
    let (y_min, y_max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let range = y_max - y_min;
    if !(range > 0.0) {
        return vec![0.0, span, y_min];
    }
    let decreasing = first >= last;
    let y0 = if decreasing { y_min - 0.1 * range } else { y_max + 0.1 * range };
    let xs: Vec<f64> = t.to_vec();
    let ls: Vec<f64> = y.iter().map(|v| (v - y0).abs().ln()).collect();
    let (slope, intercept) = ordinary_least_squares(&xs, &ls);
    let t_d = if slope < 0.0 && slope.is_finite() { (-1.0 / slope).max(min_td) } else { span / 2.0 };
    let sign = if decreasing { 1.0 } else { -1.0 };
    let amplitude = sign * intercept.exp();
    if amplitude.is_finite() {
        vec![amplitude, t_d, y0]
    } else {
        vec![first - last, span / 2.0, last]
    }
}

fn ordered_ends(t: &[f64], y: &[f64]) -> (f64, f64) {
    let i_first = (0..t.len()).min_by(|a, b| t[*a].total_cmp(&t[*b])).unwrap_or(0);
    let i_last = (0..t.len()).max_by(|a, b| t[*a].total_cmp(&t[*b])).unwrap_or(0);
    (y[i_first], y[i_last])
}

/// Unweighted (slope, intercept).
pub fn ordinary_least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    weighted_least_squares(x, y, None)
}

fn weighted_least_squares(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> (f64, f64) {
    let w = |i: usize| sigma.map_or(1.0, |s| 1.0 / (s[i] * s[i]));
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sw += w(i);
        sx += w(i) * x[i];
        sy += w(i) * y[i];
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in 0..x.len() {
        sxx += w(i) * (x[i] - mx) * (x[i] - mx);
        sxy += w(i) * (x[i] - mx) * (y[i] - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// ln t_d = a·ln σ + b, weighted by δ(ln t_d) = δt_d/t_d when errors are given.
pub fn fit_powerlaw_loglog(power: &[f64], t_d: &[f64], t_d_err: Option<&[f64]>) -> Result<FitResult> {
    if power.len() != t_d.len() {
        return Err(Error::invalid(format!("{} powers but {} decay times", power.len(), t_d.len())));
    }
    if power.len() < 2 {
        return Err(Error::invalid("a power law needs at least two points"));
    }
    if let Some(v) = power.iter().chain(t_d).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("power-law inputs must be positive, got {v}")));
    }
    let x: Vec<f64> = power.iter().map(|v| v.ln()).collect();
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::invalid("all powers are equal; the slope is undetermined"));
    }
    let y: Vec<f64> = t_d.iter().map(|v| v.ln()).collect();
    let sigma = match t_d_err {
        Some(err) => {
            if err.len() != t_d.len() {
                return Err(Error::invalid(format!("{} errors for {} decay times", err.len(), t_d.len())));
            }
            Some(err.iter().zip(t_d).map(|(e, t)| e / t).collect::<Vec<f64>>())
        }
        None => None,
    };
    let (a, b) = weighted_least_squares(&x, &y, sigma.as_deref());
    let mut fit = lm_fit(&Line, &x, &y, sigma.as_deref(), &[a, b])?;
    fit.model = "powerlaw_loglog".into();
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsRow {
    pub time: f64,
    pub fit_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub converged: bool,
    pub areas: Vec<f64>,
    pub area_errs: Vec<f64>,
    pub fwhms: Vec<f64>,
    pub fwhm_errs: Vec<f64>,
    pub centers: Vec<f64>,
    pub total_area: f64,
    pub total_area_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsReport {
    pub rows: Vec<KineticsRow>,
    /// Exponential decay of the total area vs time.
    pub decay: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_error: Option<String>,
}

/// Fits every spectrum with the same peak configuration, then fits the decay of
/// the summed peak area. A failed spectrum leaves a gap in the table.
pub fn kinetics_series(spectra: &[(f64, Spectrum)], opts: &PeakFitOptions, exec: Execution) -> Result<KineticsReport> {
    if spectra.len() < MIN_DECAY_POINTS {
        return Err(Error::invalid(format!("kinetics needs at least {MIN_DECAY_POINTS} spectra, got {}", spectra.len())));
    }
    if let Some((t, _)) = spectra.iter().find(|(t, _)| !t.is_finite()) {
        return Err(Error::invalid(format!("illumination time {t} is not finite")));
    }
    let rows = map_ordered(spectra, exec, |(time, spec)| match fit_peaks(spec, opts) {
        Ok(fit) => row_from_fit(*time, &fit),
        Err(e) => KineticsRow {
            time: *time,
            fit_ok: false,
            error: Some(e.to_string()),
            converged: false,
            areas: Vec::new(),
            area_errs: Vec::new(),
            fwhms: Vec::new(),
            fwhm_errs: Vec::new(),
            centers: Vec::new(),
            total_area: f64::NAN,
            total_area_err: f64::NAN,
        },
    });
    let usable: Vec<&KineticsRow> = rows.iter().filter(|r| r.fit_ok && r.total_area_err > 0.0).collect();
    let t: Vec<f64> = usable.iter().map(|r| r.time).collect();
    let y: Vec<f64> = usable.iter().map(|r| r.total_area).collect();
    let s: Vec<f64> = usable.iter().map(|r| r.total_area_err).collect();
    let (decay, decay_error) = match fit_exponential_decay(&t, &y, Some(&s)) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(KineticsReport { rows, decay, decay_error })
}

fn row_from_fit(time: f64, fit: &FitResult) -> KineticsRow {
    let cov = fit.covariance_matrix();
    let total_area = fit.peaks.iter().map(|p| p.area).sum();
    // Total-area variance including cross-peak covariances: each area depends
    // on its amplitude and width parameters.
    let mut grad = vec![0.0; fit.params.len()];
    for (k, peak) in fit.peaks.iter().enumerate() {
        let Some(ia) = fit.param_names.iter().position(|n| *n == format!("amplitude_{}", k + 1)) else {
            continue;
        };
        let (a, w) = (fit.params[ia], fit.params[ia + 2]);
        grad[ia] = if a != 0.0 { peak.area / a } else { 0.0 };
        grad[ia + 2] = if w != 0.0 { peak.area / w } else { 0.0 };
    }
    let indexed: Vec<(usize, f64)> = grad.into_iter().enumerate().filter(|(_, g)| *g != 0.0).collect();
    KineticsRow {
        time,
        fit_ok: true,
        error: None,
        converged: fit.converged,
        areas: fit.peaks.iter().map(|p| p.area).collect(),
        area_errs: fit.peaks.iter().map(|p| p.area_err).collect(),
        fwhms: fit.peaks.iter().map(|p| p.fwhm).collect(),
        fwhm_errs: fit.peaks.iter().map(|p| p.fwhm_err).collect(),
        centers: fit.peaks.iter().map(|p| p.center).collect(),
        total_area,
        total_area_err: super::lm::propagate(&cov, &indexed).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_decay() {
        let t: Vec<f64> = (0..10).map(|i| 6.25 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-t / 18.0).exp() + 0.5).collect();
        let fit = fit_exponential_decay(&t, &y, None).unwrap();
        let (td, _) = fit.param("t_d").unwrap();
        assert!((td - 18.0).abs() < 18e-6, "{td}");
        assert!(!fit.degenerate);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let fit = fit_exponential_decay(&t, &[2.0; 5], None).unwrap();
        assert!(fit.degenerate);
        assert!(fit_exponential_decay(&t[..3], &[1.0, 2.0, 3.0], None).is_err());
    }

    #[test]
    fn exact_power_law() {
        let p = [0.5, 1.0, 2.0, 4.0, 8.0];
        let td: Vec<f64> = p.iter().map(|p| 1.2e6 / p).collect();
        let fit = fit_powerlaw_loglog(&p, &td, None).unwrap();
        assert!((fit.params[0] + 1.0).abs() < 1e-10);
        assert!((fit.params[1] - 1.2e6f64.ln()).abs() < 1e-9);
        assert!(fit_powerlaw_loglog(&[1.0], &[2.0], None).is_err());
        assert!(fit_powerlaw_loglog(&[1.0, -2.0], &[2.0, 1.0], None).is_err());
    }
}
