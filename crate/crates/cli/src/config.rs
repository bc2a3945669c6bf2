//! Run configuration: a TOML document whose keys carry their units.
//!
//! Every table rejects unknown keys, so a typo such as `depth_mn` is reported
//! with its line instead of being ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zfepr::constants::surface_100_alpha;
use zfepr::ensemble::EnsembleParams;
use zfepr::fit::{Baseline, InitStrategy, PeakFitOptions, PeakShape};
use zfepr::relaxometry::{SensorParams, TargetLinewidth};
use zfepr::spectrum::{frequency_grid, BaselineModel, Spectrum, DEFAULT_GRID};
use zfepr::spin::HyperfineSystem;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemConfig>,
    pub sensor: Option<SensorConfig>,
    pub target: Option<TargetConfig>,
    pub sweep: Option<SweepConfig>,
    pub noise: Option<NoiseConfig>,
    pub baseline: Option<BaselineConfig>,
    pub mc: Option<McConfig>,
    pub fit: Option<FitConfig>,
    pub run: Option<RunSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// "14N" or "15N"; alternative to `nuclear_spin`.
    pub isotope: Option<String>,
    /// I as a number: 0.5, 1, 1.5, ...
    pub nuclear_spin: Option<f64>,
    pub a_perp_mhz: f64,
    pub a_par_mhz: f64,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// T1′ under modulated driving; Γ1′ = 1/T1′.
    pub t1_prime_ms: f64,
    pub gamma2_nv_mhz: f64,
    pub kappa: f64,
    pub depth_nm: f64,
    /// Angle between NV axis and surface normal; defaults to a (100) surface.
    pub surface_alpha_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub gamma2_target_mhz: f64,
    pub concentration_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub points: usize,
}

/// Either an absolute contrast noise or a target peak SNR; neither means noiseless.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_contrast: Option<f64>,
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// "none", "slanted" or "blank_trace"
    pub kind: String,
    pub slope_per_mhz: Option<f64>,
    pub offset: Option<f64>,
    /// Reference spectrum CSV for `blank_trace`, relative to the config file.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub samples: u64,
    /// Index into the observable transitions sorted by frequency; defaults to
    /// the strongest one.
    pub transition_index: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// "gaussian", "lorentzian" or "double_lorentzian"
    pub model: Option<String>,
    pub peaks: Option<usize>,
    /// "slanted" or "offset"
    pub baseline: Option<String>,
    pub centers_mhz: Option<Vec<f64>>,
    pub width_min_mhz: Option<f64>,
    pub width_max_mhz: Option<f64>,
    /// Levenberg–Marquardt iteration cap (default 500).
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

/// A parsed config plus the directory relative paths are resolved against.
#[derive(Debug, Clone, Default)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config = parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
    toml::from_str(text)
}

fn require<'a, T>(section: &'a Option<T>, name: &str, command: &str) -> CliResult<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("config table [{name}] is required for `{command}`")))
}

impl RunConfig {
    pub fn hyperfine_system(&self, command: &str) -> CliResult<HyperfineSystem> {
        let s = require(&self.system, "system", command)?;
        let twice = match (&s.isotope, s.nuclear_spin) {
            (Some(_), Some(_)) => {
                return Err(CliError::Validation("[system]: give either `isotope` or `nuclear_spin`, not both".into()))
            }
            (Some(iso), None) => match iso.as_str() {
                "14N" => 2,
                "15N" => 1,
                other => return Err(CliError::Validation(format!("[system] isotope `{other}`: expected \"14N\" or \"15N\""))),
            },
            (None, Some(i)) => {
                let twice = 2.0 * i;
                if !(twice >= 1.0 && twice.fract() == 0.0 && twice <= 99.0) {
                    return Err(CliError::Validation(format!("[system] nuclear_spin = {i} must be a positive half-integer")));
                }
                twice as u32
            }
            (None, None) => return Err(CliError::Validation("[system]: `isotope` or `nuclear_spin` is required".into())),
        };
        let label = s.label.clone().or_else(|| s.isotope.clone()).unwrap_or_default();
        Ok(HyperfineSystem::new(twice, s.a_perp_mhz, s.a_par_mhz, label)?)
    }

    pub fn sensor_params(&self, command: &str) -> CliResult<SensorParams> {
        let s = require(&self.sensor, "sensor", command)?;
        if !(s.t1_prime_ms > 0.0) {
            return Err(CliError::Validation(format!("[sensor] t1_prime_ms = {} must be positive", s.t1_prime_ms)));
        }
        let alpha = match s.surface_alpha_deg {
            Some(deg) => deg.to_radians(),
            None => surface_100_alpha(),
        };
        let p = SensorParams {
            gamma1_prime: 1.0 / s.t1_prime_ms,
            gamma2_nv: s.gamma2_nv_mhz,
            kappa: s.kappa,
            depth_h: s.depth_nm,
            surface_alpha: alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn target(&self, command: &str) -> CliResult<&TargetConfig> {
        require(&self.target, "target", command)
    }

    /// Ensemble parameters for `sys` with ξ left at zero.
    pub fn ensemble(&self, sys: &HyperfineSystem, command: &str) -> CliResult<EnsembleParams> {
        let sensor = self.sensor_params(command)?;
        let t = self.target(command)?;
        let e = EnsembleParams::from_sensor(
            &sensor,
            TargetLinewidth { gamma2_target: t.gamma2_target_mhz },
            t.concentration_mm,
            sys.nuclear_spin_twice(),
            0.0,
        );
        e.validate()?;
        Ok(e)
    }

    pub fn grid(&self) -> CliResult<Vec<f64>> {
        let (a, b, n) = match &self.sweep {
            Some(s) => (s.start_mhz, s.stop_mhz, s.points),
            None => DEFAULT_GRID,
        };
        Ok(frequency_grid(a, b, n)?)
    }

    pub fn noise(&self) -> CliResult<NoiseConfig> {
        let n = self.noise.clone().unwrap_or_default();
        match (n.sigma_contrast, n.snr) {
            (Some(_), Some(_)) => Err(CliError::Validation("[noise]: give `sigma_contrast` or `snr`, not both".into())),
            (Some(s), None) if !(s >= 0.0 && s.is_finite()) => {
                Err(CliError::Validation(format!("[noise] sigma_contrast = {s} must be >= 0")))
            }
            (None, Some(r)) if !(r > 0.0) => Err(CliError::Validation(format!("[noise] snr = {r} must be positive"))),
            _ => Ok(n),
        }
    }

    pub fn baseline(&self, loaded: &LoadedConfig) -> CliResult<BaselineModel> {
        let Some(b) = &self.baseline else {
            return Ok(BaselineModel::None);
        };
        let unexpected = |key: &str| CliError::Validation(format!("[baseline] `{key}` does not apply to kind \"{}\"", b.kind));
        match b.kind.as_str() {
            "none" => {
                if b.slope_per_mhz.is_some() || b.offset.is_some() {
                    return Err(unexpected("slope_per_mhz/offset"));
                }
                if b.path.is_some() {
                    return Err(unexpected("path"));
                }
                Ok(BaselineModel::None)
            }
            "slanted" => {
                if b.path.is_some() {
                    return Err(unexpected("path"));
                }
                Ok(BaselineModel::Slanted { slope_per_mhz: b.slope_per_mhz.unwrap_or(0.0), offset: b.offset.unwrap_or(0.0) })
            }
            "blank_trace" => {
                if b.slope_per_mhz.is_some() || b.offset.is_some() {
                    return Err(unexpected("slope_per_mhz/offset"));
                }
                let path = b
                    .path
                    .as_ref()
                    .ok_or_else(|| CliError::Validation("[baseline] kind \"blank_trace\" needs `path`".into()))?;
                let path = loaded.resolve(path);
                let reference = Spectrum::load(&path).map_err(|e| CliError::from_core_at(&path, e))?;
                Ok(BaselineModel::BlankTrace { reference })
            }
            other => Err(CliError::Validation(format!(
                "[baseline] kind `{other}`: expected \"none\", \"slanted\" or \"blank_trace\""
            ))),
        }
    }
}

/// Command-line overrides for the fit model.
#[derive(Debug, Clone, Default)]
pub struct FitOverrides {
    pub model: Option<String>,
    pub peaks: Option<usize>,
    pub baseline: Option<String>,
    pub centers: Option<Vec<f64>>,
}

/// Resolves the peak-fit options: flags first, then `[fit]`, then defaults
/// (3 Gaussian peaks on a slanted baseline).
pub fn peak_fit_options(cfg: Option<&FitConfig>, over: &FitOverrides) -> CliResult<PeakFitOptions> {
    let fc = cfg.cloned().unwrap_or_default();
    let model = over.model.clone().or(fc.model).unwrap_or_else(|| "gaussian".into());
    let (shape, default_baseline, default_peaks) = match model.as_str() {
        "gaussian" => (PeakShape::Gaussian, "slanted", 3),
        "lorentzian" => (PeakShape::Lorentzian, "slanted", 3),
        "double_lorentzian" | "double-lorentzian" => (PeakShape::Lorentzian, "offset", 2),
        other => {
            return Err(CliError::Validation(format!(
                "fit model `{other}`: expected gaussian, lorentzian or double_lorentzian"
            )))
        }
    };
    let peaks = over.peaks.or(fc.peaks).unwrap_or(default_peaks);
    if peaks == 0 {
        return Err(CliError::Validation("fit needs at least one peak".into()));
    }
    let baseline = match over.baseline.clone().or(fc.baseline).as_deref().unwrap_or(default_baseline) {
        "slanted" => Baseline::Slanted,
        "offset" => Baseline::Offset,
        other => return Err(CliError::Validation(format!("fit baseline `{other}`: expected slanted or offset"))),
    };
    let init = match over.centers.clone().or(fc.centers_mhz) {
        Some(c) if c.len() == peaks => InitStrategy::Centers(c),
        Some(c) if c.len() < peaks => InitStrategy::LocalMaximaWithFallback(c),
        Some(c) => {
            return Err(CliError::Validation(format!("{} centers given for {peaks} peaks", c.len())));
        }
        None => InitStrategy::LocalMaxima,
    };
    let mut opts = PeakFitOptions::new(shape, baseline, peaks, init);
    opts.width_bounds = match (fc.width_min_mhz, fc.width_max_mhz) {
        (None, None) => None,
        (Some(a), Some(b)) if a > 0.0 && b > a => Some((a, b)),
        (a, b) => {
            return Err(CliError::Validation(format!(
                "[fit] width_min_mhz/width_max_mhz must both be set with 0 < min < max (got {a:?}, {b:?})"
            )))
        }
    };
    if let Some(n) = fc.max_iterations {
        opts.lm.max_iterations = n;
    }
    Ok(opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
[system]
isotope = "15N"
a_perp_mhz = 32.0
a_par_mhz = 120.0

[sensor]
t1_prime_ms = 3.7
gamma2_nv_mhz = 1.0
kappa = 0.71
depth_nm = 8.0

[target]
gamma2_target_mhz = 2.0
concentration_mm = 100.0

[sweep]
start_mhz = 20.0
stop_mhz = 130.0
points = 30

[noise]
snr = 25.0

[baseline]
kind = "slanted"
slope_per_mhz = 1e-6
offset = 0.0

[mc]
samples = 100000

[run]
seed = 7
"#;

    #[test]
    fn full_config_parses() {
        let c = parse(FULL).unwrap();
        let sys = c.hyperfine_system("t").unwrap();
        assert_eq!(sys.nuclear_spin_twice(), 1);
        let s = c.sensor_params("t").unwrap();
        assert!((s.gamma1_prime - 1.0 / 3.7).abs() < 1e-15);
        assert_eq!(c.grid().unwrap().len(), 30);
        assert_eq!(c.run.unwrap().seed, Some(7));
    }

    #[test]
    fn unknown_keys_name_field_and_line() {
        let text = FULL.replace("depth_nm = 8.0", "depth_mn = 8.0");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("depth_mn"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
        assert!(parse("[system]\nisotope = \"15N\"\na_perp_mhz = 1\na_par_mhz = 2\nspin = 1\n").is_err());
        assert!(parse("[unknown]\n").is_err());
    }

    #[test]
    fn isotope_or_spin() {
        let c = parse("[system]\nnuclear_spin = 1.5\na_perp_mhz = 10\na_par_mhz = 50\n").unwrap();
        assert_eq!(c.hyperfine_system("t").unwrap().nuclear_spin_twice(), 3);
        let c = parse("[system]\nnuclear_spin = 0.7\na_perp_mhz = 10\na_par_mhz = 50\n").unwrap();
        assert!(c.hyperfine_system("t").is_err());
        let c = parse("[system]\nisotope = \"13C\"\na_perp_mhz = 10\na_par_mhz = 50\n").unwrap();
        assert!(c.hyperfine_system("t").is_err());
    }

    #[test]
    fn fit_option_resolution() {
        let o = peak_fit_options(None, &FitOverrides::default()).unwrap();
        assert_eq!((o.shape, o.baseline, o.n_peaks), (PeakShape::Gaussian, Baseline::Slanted, 3));
        let over = FitOverrides { model: Some("double_lorentzian".into()), ..Default::default() };
        let o = peak_fit_options(None, &over).unwrap();
        assert_eq!((o.shape, o.baseline, o.n_peaks), (PeakShape::Lorentzian, Baseline::Offset, 2));
        let over = FitOverrides { centers: Some(vec![30.0, 50.0, 76.0]), ..Default::default() };
        assert_eq!(peak_fit_options(None, &over).unwrap().init, InitStrategy::Centers(vec![30.0, 50.0, 76.0]));
        let over = FitOverrides { centers: Some(vec![1.0; 4]), ..Default::default() };
        assert!(peak_fit_options(None, &over).is_err());
    }
}
