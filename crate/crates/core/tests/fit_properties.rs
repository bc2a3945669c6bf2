use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zfepr::constants::BETA;
use zfepr::ensemble::EnsembleParams;
use zfepr::fit::*;
use zfepr::parallel::Execution;
use zfepr::relaxometry::SensorParams;
use zfepr::spectrum::*;
use zfepr::spin::HyperfineSystem;

fn gaussian_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
}

fn multi(shape: PeakShape, baseline: Baseline, n_peaks: usize) -> MultiPeakModel {
    MultiPeakModel { shape, baseline, n_peaks, center_bounds: (20.0, 130.0), width_bounds: (0.05, 110.0) }
}

fn spectrum_from<M: FitModel>(model: &M, p: &[f64], grid: &[f64], sigma: f64, seed: u64) -> Spectrum {
    let noise = gaussian_noise(grid.len(), sigma, seed);
    let values = grid.iter().zip(&noise).map(|(f, e)| model.eval(p, *f) + e).collect();
    let s = if sigma > 0.0 { Some(vec![sigma; grid.len()]) } else { None };
    Spectrum::new(grid.to_vec(), values, s).unwrap()
}

/// ¹⁵N (32, 120) lines with Γ2 = 3 MHz.
fn n15_lines() -> Vec<SpectralLine> {
    let sys = HyperfineSystem::nitrogen15(32.0, 120.0).unwrap();
    let ens = EnsembleParams {
        concentration_mm: 100.0,
        depth_h: 8.0,
        surface_alpha: 0.955,
        kappa: 0.5,
        gamma2_total: 3.0,
        nuclear_spin_twice: 1,
        xi: 0.0,
        prefactor_beta: BETA,
    };
    let sensor = SensorParams { gamma1_prime: 1.0 / 3.7, gamma2_nv: 1.0, kappa: 0.5, depth_h: 8.0, surface_alpha: 0.955 };
    spectral_lines(&sys, &ens, &sensor).unwrap()
}

#[test]
fn jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst = 0.0_f64;
    for shape in [PeakShape::Gaussian, PeakShape::Lorentzian] {
        for baseline in [Baseline::Offset, Baseline::Slanted] {
            for n_peaks in 1..=3 {
                let m = multi(shape, baseline, n_peaks);
                for _ in 0..100 {
                    let mut p: Vec<f64> = (0..baseline.n_params()).map(|_| rng.random_range(-1e-2..1e-2)).collect();
                    for _ in 0..n_peaks {
                        p.push(rng.random_range(-1.0..1.0));
                        p.push(rng.random_range(20.0..130.0));
                        p.push(rng.random_range(0.3..20.0));
                    }
                    let x = rng.random_range(20.0..130.0);
                    worst = worst.max(gradient_relative_error(&m, &p, x));
                }
            }
        }
    }
    let decay = ExponentialDecay { min_decay_time: 1e-3 };
    for _ in 0..100 {
        let p = [rng.random_range(-5.0..5.0), rng.random_range(1.0..100.0), rng.random_range(-1.0..1.0)];
        worst = worst.max(gradient_relative_error(&decay, &p, rng.random_range(0.0..60.0)));
    }
    for _ in 0..100 {
        let p = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        worst = worst.max(gradient_relative_error(&Line, &p, rng.random_range(-100.0..100.0)));
    }
    assert!(worst < 1e-6, "worst relative gap {worst:e}");
}

#[test]
fn line_fit_matches_closed_form_least_squares() {
    let x: Vec<f64> = (0..25).map(|i| -3.0 + 0.37 * i as f64).collect();
    let noise = gaussian_noise(x.len(), 0.4, 5);
    let y: Vec<f64> = x.iter().zip(&noise).map(|(x, e)| 1.7 * x - 0.6 + e).collect();
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let b = (sy - a * sx) / n;
    let fit = lm_fit(&Line, &x, &y, None, &[0.0, 0.0]).unwrap();
    assert!((fit.params[0] - a).abs() <= 1e-10 * a.abs());
    assert!((fit.params[1] - b).abs() <= 1e-10 * b.abs());
    // textbook slope variance s²/Sxx with s² the residual variance
    let s2: f64 = x.iter().zip(&y).map(|(x, y)| (y - a * x - b).powi(2)).sum::<f64>() / (n - 2.0);
    let var_a = s2 / (sxx - sx * sx / n);
    assert!((fit.uncertainties[0] / var_a.sqrt() - 1.0).abs() < 1e-8);
}

#[test]
fn exact_data_recovered_from_perturbed_start() {
    let grid = frequency_grid(20.0, 130.0, 111).unwrap();
    let cases: Vec<(MultiPeakModel, Vec<f64>)> = vec![
        (multi(PeakShape::Gaussian, Baseline::Slanted, 3), vec![2e-5, 1e-3, 0.02, 32.0, 3.0, 0.04, 44.0, 3.5, 0.04, 76.0, 3.0]),
        (multi(PeakShape::Lorentzian, Baseline::Offset, 2), vec![0.01, 1.0, 50.0, 1.5, 1.0, 58.0, 1.5]),
        (multi(PeakShape::Gaussian, Baseline::Offset, 1), vec![0.003, 0.5, 70.0, 6.0]),
    ];
    for (model, truth) in cases {
        let s = spectrum_from(&model, &truth, &grid, 0.0, 0);
        // ±10% on every parameter; centers move by 10% of their peak width
        let mut init: Vec<f64> = truth.iter().enumerate().map(|(i, v)| v * if i % 2 == 0 { 1.1 } else { 0.9 }).collect();
        for k in 0..model.n_peaks {
            let o = model.peak_offset(k);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            init[o + 1] = truth[o + 1] + sign * 0.1 * truth[o + 2];
        }
        let fit = lm_fit(&model, &s.freqs, &s.values, None, &init).unwrap();
        assert!(fit.converged, "{}", model.name());
        for (i, (got, want)) in fit.params.iter().zip(&truth).enumerate() {
            assert!((got - want).abs() <= 1e-6 * want.abs(), "{} param {i}: {got} vs {want}", model.name());
        }
    }
    let t: Vec<f64> = (0..10).map(|i| 6.25 * i as f64).collect();
    let decay = ExponentialDecay { min_decay_time: 1e-3 };
    let truth = [1.0, 18.0, 0.2];
    let y: Vec<f64> = t.iter().map(|t| decay.eval(&truth, *t)).collect();
    let fit = lm_fit(&decay, &t, &y, None, &[1.1, 16.2, 0.22]).unwrap();
    for (got, want) in fit.params.iter().zip(&truth) {
        assert!((got - want).abs() <= 1e-6 * want.abs());
    }
}

#[test]
fn zero_noise_single_gaussian_through_peak_picker() {
    let grid = frequency_grid(20.0, 130.0, 111).unwrap();
    let model = multi(PeakShape::Gaussian, Baseline::Slanted, 1);
    let truth = [1e-5, 2e-3, 0.05, 61.3, 4.2];
    let s = spectrum_from(&model, &truth, &grid, 0.0, 0);
    let fit = fit_gaussian_peaks_slanted(&s, 1, InitStrategy::LocalMaxima).unwrap();
    for (got, want) in fit.params.iter().zip(&truth) {
        assert!((got - want).abs() <= 1e-6 * want.abs(), "{got} vs {want}");
    }
}

#[test]
fn chi2_never_increases_over_iterations() {
    let grid = frequency_grid(20.0, 130.0, 111).unwrap();
    let model = multi(PeakShape::Lorentzian, Baseline::Slanted, 3);
    let truth = [1e-5, 1e-3, 0.02, 32.0, 3.0, 0.04, 44.0, 3.0, 0.04, 76.0, 3.0];
    let s = spectrum_from(&model, &truth, &grid, 0.003, 9);
    let init = [0.0, 0.0, 0.01, 33.5, 4.0, 0.01, 45.0, 4.0, 0.01, 74.5, 4.0];
    let mut previous = f64::INFINITY;
    let mut initial = None;
    for cap in 0..60 {
        let opts = LmOptions { max_iterations: cap, ..LmOptions::default() };
        let fit = lm_fit_with(&model, &s.freqs, &s.values, s.sigma.as_deref(), &init, &opts).unwrap();
        assert!(fit.chi2 <= previous, "iteration {cap}: {} > {previous}", fit.chi2);
        assert!(fit.residual_norm <= fit.initial_residual_norm);
        initial.get_or_insert(fit.initial_residual_norm);
        previous = fit.chi2;
    }
    assert!(previous < 0.1 * initial.unwrap().powi(2));
}

#[test]
fn one_sigma_coverage_of_well_posed_fits() {
    let grid = frequency_grid(20.0, 130.0, 61).unwrap();
    let model = multi(PeakShape::Gaussian, Baseline::Slanted, 1);
    let truth = [2e-5, 1e-3, 0.03, 64.0, 5.0];
    let (mut center_hits, mut td_hits) = (0, 0);
    for seed in 0..300u64 {
        let s = spectrum_from(&model, &truth, &grid, 0.003, 10_000 + seed);
        let fit = fit_gaussian_peaks_slanted(&s, 1, InitStrategy::LocalMaxima).unwrap();
        let p = &fit.peaks[0];
        center_hits += usize::from((p.center - truth[3]).abs() <= p.center_err);

        let t: Vec<f64> = (0..10).map(|i| 6.25 * i as f64).collect();
        let noise = gaussian_noise(t.len(), 0.04, 20_000 + seed);
        let y: Vec<f64> = t.iter().zip(&noise).map(|(t, e)| (-t / 18.0).exp() + 0.2 + e).collect();
        let fit = fit_exponential_decay(&t, &y, Some(&[0.04; 10])).unwrap();
        let (td, err) = fit.param("t_d").unwrap();
        td_hits += usize::from((td - 18.0).abs() <= err);
    }
    for (label, hits) in [("center", center_hits), ("t_d", td_hits)] {
        let rate = hits as f64 / 300.0;
        assert!((rate - 0.68).abs() <= 0.10, "{label} 1-sigma coverage {rate}");
    }
}

#[test]
fn gaussian_triplet_centers_within_two_sigma() {
    let grid = frequency_grid(20.0, 130.0, 111).unwrap();
    let model = multi(PeakShape::Gaussian, Baseline::Slanted, 3);
    let truth = [2e-5, 1e-3, 0.02, 32.0, 3.0, 0.04, 44.0, 3.0, 0.04, 76.0, 3.0];
    let noise = 0.04 / 25.0;
    let mut hits = 0;
    for seed in 0..100u64 {
        let s = spectrum_from(&model, &truth, &grid, noise, 300 + seed);
        let fit = fit_gaussian_peaks_slanted(&s, 3, InitStrategy::LocalMaxima).unwrap();
        let within = fit.peaks.iter().zip([32.0, 44.0, 76.0]).all(|(p, c)| (p.center - c).abs() <= 2.0 * p.center_err);
        hits += usize::from(within);
    }
    assert!(hits >= 90, "{hits}/100 trials with all centers within 2 sigma");
}

#[test]
fn nitrogen15_synthesis_round_trip() {
    let grid = frequency_grid(20.0, 130.0, 111).unwrap();
    let lines = n15_lines();
    let noise = noise_sigma_for_snr(&lines, &grid, 25.0).unwrap();
    let baseline = BaselineModel::Slanted { slope_per_mhz: 1e-6, offset: 1e-4 };
    let (mut lorentz_hits, mut gauss_close) = (0, 0);
    for seed in 0..100u64 {
        let s = synthesize_lines(&lines, &grid, &baseline, noise, seed, Execution::Sequential).unwrap();
        let fit = fit_lorentzian_peaks_slanted(&s, 3, InitStrategy::LocalMaxima).unwrap();
        for (p, l) in fit.peaks.iter().zip(&lines) {
            lorentz_hits += usize::from((p.center - l.center).abs() <= 2.0 * p.center_err);
        }
        let fit = fit_gaussian_peaks_slanted(&s, 3, InitStrategy::LocalMaxima).unwrap();
        gauss_close += fit.peaks.iter().zip([32.0, 44.0, 76.0]).filter(|(p, c)| (p.center - c).abs() <= 2.0).count();
    }
    assert!(lorentz_hits >= 270, "{lorentz_hits}/300 centers within 2 sigma");
    assert_eq!(gauss_close, 300, "Gaussian-fit centers within 2 MHz");
}

#[test]
fn realism_target_centers() {
    // truth built at 30, 50 and 76 MHz on a slanted background
    let grid = frequency_grid(20.0, 130.0, 30).unwrap();
    let model = multi(PeakShape::Gaussian, Baseline::Slanted, 3);
    let truth = [-3e-5, 4e-3, 0.02, 30.0, 4.0, 0.03, 50.0, 4.0, 0.035, 76.0, 4.0];
    let s = spectrum_from(&model, &truth, &grid, 0.001, 77);
    let fit = fit_gaussian_peaks_slanted(&s, 3, InitStrategy::LocalMaximaWithFallback(vec![30.0, 50.0, 76.0])).unwrap();
    for (p, c) in fit.peaks.iter().zip([30.0, 50.0, 76.0]) {
        assert!((p.center - c).abs() < 2.0, "{} vs {c}", p.center);
    }
}

#[test]
fn gaussian_area_matches_numerical_integral() {
    let grid = frequency_grid(20.0, 130.0, 111).unwrap();
    let model = multi(PeakShape::Gaussian, Baseline::Slanted, 1);
    let s = spectrum_from(&model, &[1e-5, 1e-3, 0.03, 70.0, 4.0], &grid, 0.002, 3);
    let fit = fit_gaussian_peaks_slanted(&s, 1, InitStrategy::LocalMaxima).unwrap();
    let (a, mu, sigma) = (fit.params[2], fit.params[3], fit.params[4]);
    // composite Simpson over ±12σ
    let n = 4000;
    let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
    let h = (hi - lo) / n as f64;
    let f = |x: f64| PeakShape::Gaussian.eval(a, mu, sigma, x);
    let mut integral = f(lo) + f(hi);
    for i in 1..n {
        integral += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    integral *= h / 3.0;
    assert!((fit.peaks[0].area / integral - 1.0).abs() < 1e-3);
    assert!((fit.peaks[0].area - a * sigma * (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
}

#[test]
fn symmetric_doublet_has_equal_widths() {
    let grid = frequency_grid(40.0, 70.0, 301).unwrap();
    let model = multi(PeakShape::Lorentzian, Baseline::Offset, 2);
    let s = spectrum_from(&model, &[0.0, 1.0, 52.0, 1.0, 1.0, 58.0, 1.0], &grid, 0.0, 0);
    let fit = fit_double_lorentzian(&s).unwrap();
    assert!((fit.peaks[0].fwhm / fit.peaks[1].fwhm - 1.0).abs() < 0.01);
    assert!(!fit.ill_conditioned);
}

#[test]
fn doublet_fwhm_recovered_at_snr_20() {
    let grid = frequency_grid(40.0, 70.0, 601).unwrap();
    let model = multi(PeakShape::Lorentzian, Baseline::Offset, 2);
    let truth = [0.0, 1.0, 52.0, 1.0, 1.0, 58.0, 1.0];
    // σ(FWHM) ≈ 0.04 MHz here, so the 5% band is a 2.5σ event per peak
    let mut within = 0;
    for seed in 0..100u64 {
        let s = spectrum_from(&model, &truth, &grid, 1.0 / 20.0, 900 + seed);
        let fit = fit_double_lorentzian(&s).unwrap();
        within += fit.peaks.iter().filter(|p| (p.fwhm / 2.0 - 1.0).abs() < 0.05).count();
    }
    assert!(within >= 190, "{within}/200 fitted FWHMs within 5%");
}

#[test]
fn merged_doublet_is_flagged() {
    let grid = frequency_grid(40.0, 70.0, 301).unwrap();
    let model = multi(PeakShape::Lorentzian, Baseline::Offset, 2);
    // FWHM 2 MHz, so FWHM/4 = 0.5 MHz
    for separation in [0.1, 0.3, 0.45] {
        let truth = [0.0, 1.0, 55.0, 1.0, 0.8, 55.0 + separation, 1.0];
        let s = spectrum_from(&model, &truth, &grid, 0.0, 0);
        let fit = fit_double_lorentzian(&s).unwrap();
        assert!(fit.ill_conditioned, "separation {separation}");
        assert!(!fit.warnings.is_empty());
    }
}

#[test]
fn decay_examples() {
    let t: Vec<f64> = (0..10).map(|i| 6.25 * i as f64).collect();
    let y: Vec<f64> = t.iter().map(|t| 0.8 * (-t / 18.0).exp() + 0.1).collect();
    let (td, _) = fit_exponential_decay(&t, &y, None).unwrap().param("t_d").unwrap();
    assert!((td / 18.0 - 1.0).abs() < 1e-6);
    let y: Vec<f64> = t.iter().map(|t| 0.8 * (-t / 22.0).exp() + 0.1).collect();
    let (td, _) = fit_exponential_decay(&t, &y, None).unwrap().param("t_d").unwrap();
    assert!((td / 22.0 - 1.0).abs() < 1e-6);
    assert!(fit_exponential_decay(&t, &[0.3; 10], None).unwrap().degenerate);
    assert!(fit_exponential_decay(&t[..3], &y[..3], None).is_err());
}

#[test]
fn power_law_examples() {
    let power = [50.0, 100.0, 200.0, 400.0, 800.0, 1600.0];
    let exact: Vec<f64> = power.iter().map(|p| 14f64.exp() / p).collect();
    let fit = fit_powerlaw_loglog(&power, &exact, None).unwrap();
    assert!((fit.params[0] + 1.0).abs() < 1e-10);
    assert!((fit.params[1] - 14.0).abs() < 1e-9);

    let mut inside = 0;
    for seed in 0..100u64 {
        let noise = gaussian_noise(power.len(), 0.2, 40 + seed);
        let td: Vec<f64> = exact.iter().zip(&noise).map(|(t, e)| t * (1.0 + e).max(0.05)).collect();
        let err: Vec<f64> = td.iter().map(|t| 0.2 * t).collect();
        let slope = fit_powerlaw_loglog(&power, &td, Some(&err)).unwrap().params[0];
        inside += usize::from((slope + 1.0).abs() <= 0.2);
    }
    assert!(inside >= 90, "{inside}/100 slopes within -1.0 ± 0.2");

    assert!(fit_powerlaw_loglog(&[100.0], &[1.0], None).is_err());
    assert!(fit_powerlaw_loglog(&[100.0, -1.0], &[1.0, 2.0], None).is_err());
    assert!(fit_powerlaw_loglog(&[100.0, 200.0], &[0.0, 2.0], None).is_err());
}

/// Nine spectra, 6.25 h apart: every area decays as e^(−t/18 h) while the
/// linewidth shrinks linearly.
fn kinetics_spectra(seed: u64, noise: f64) -> Vec<(f64, Spectrum)> {
    let grid = frequency_grid(20.0, 130.0, 111).unwrap();
    let baseline = BaselineModel::Slanted { slope_per_mhz: 1e-6, offset: 2e-4 };
    (0..9)
        .map(|i| {
            let t = 6.25 * i as f64;
            let hwhm = 3.0 - 0.2 * i as f64;
            let lines: Vec<SpectralLine> = [(32.0, 1.0), (44.0, 2.0), (76.0, 2.0)]
                .iter()
                .map(|&(center, weight)| {
                    let area = 0.03 * weight * (-t / 18.0).exp();
                    SpectralLine { center, height: area / (std::f64::consts::PI * hwhm), hwhm }
                })
                .collect();
            (t, synthesize_lines(&lines, &grid, &baseline, noise, seed * 100 + i, Execution::Sequential).unwrap())
        })
        .collect()
}

#[test]
fn kinetics_series_recovers_decay_and_narrowing() {
    let opts = PeakFitOptions::new(PeakShape::Lorentzian, Baseline::Slanted, 3, InitStrategy::LocalMaxima);
    let mut hits = 0;
    for seed in 0..20u64 {
        let report = kinetics_series(&kinetics_spectra(seed, 1e-5), &opts, Execution::Parallel).unwrap();
        assert!(report.rows.iter().all(|r| r.fit_ok));
        let decay = report.decay.expect("decay fit");
        let (td, err) = decay.param("t_d").unwrap();
        hits += usize::from((td - 18.0).abs() <= 2.0 * err);
        let fwhm3: Vec<f64> = report.rows.iter().map(|r| r.fwhms[2]).collect();
        assert!(fwhm3.windows(2).all(|w| w[1] < w[0]), "seed {seed}: {fwhm3:?}");
    }
    assert!(hits >= 18, "{hits}/20 series with t_d within 2 sigma");
}

#[test]
fn kinetics_edge_cases() {
    let opts = PeakFitOptions::new(PeakShape::Lorentzian, Baseline::Slanted, 3, InitStrategy::LocalMaxima);
    let series = kinetics_spectra(0, 0.0);
    assert!(kinetics_series(&series[..3], &opts, Execution::Sequential).is_err());
    assert!(kinetics_series(&[], &opts, Execution::Sequential).is_err());
    let constant: Vec<(f64, Spectrum)> = (0..6).map(|i| (6.25 * i as f64, series[0].1.clone())).collect();
    let report = kinetics_series(&constant, &opts, Execution::Sequential).unwrap();
    assert!(report.decay.unwrap().degenerate);
}

#[test]
fn kinetics_independent_of_execution() {
    let opts = PeakFitOptions::new(PeakShape::Lorentzian, Baseline::Slanted, 3, InitStrategy::LocalMaxima);
    let series = kinetics_spectra(3, 1e-5);
    let a = serde_json::to_string(&kinetics_series(&series, &opts, Execution::Sequential).unwrap()).unwrap();
    let b = serde_json::to_string(&kinetics_series(&series, &opts, Execution::Parallel).unwrap()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_symmetric_psd(seed in any::<u64>(), center in 40.0f64..110.0, width in 2.0f64..8.0) {
        let grid = frequency_grid(20.0, 130.0, 61).unwrap();
        let model = multi(PeakShape::Gaussian, Baseline::Slanted, 1);
        let s = spectrum_from(&model, &[1e-5, 1e-3, 0.03, center, width], &grid, 0.002, seed);
        let fit = fit_gaussian_peaks_slanted(&s, 1, InitStrategy::LocalMaxima).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(fit.residual_norm <= fit.initial_residual_norm);
        let cov = fit.covariance_matrix();
        prop_assert!((&cov - cov.transpose()).abs().max() <= 1e-12 * cov.abs().max());
        let scale = cov.abs().max();
        let min_eig = cov.symmetric_eigen().eigenvalues.min();
        prop_assert!(min_eig >= -1e-12 * scale);
    }
}
