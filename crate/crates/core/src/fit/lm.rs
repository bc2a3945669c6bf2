//! Damped least squares with box bounds.
//!
//! Steps solve (JᵀWJ + λ·diag(JᵀWJ))δ = JᵀW(y − f). An accepted step divides λ
//! by 10, a rejected one multiplies it by 10, starting from 1e−3. Trial points
//! are clamped into the parameter box, and the gradient test ignores components
//! that push against an active bound.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A curve y = f(p, x) with analytic partial derivatives.
pub trait FitModel: Sync {
    fn name(&self) -> String;

    fn param_names(&self) -> Vec<String>;

    fn n_params(&self) -> usize {
        self.param_names().len()
    }

    /// Inclusive (lower, upper) box for each parameter.
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); self.n_params()]
    }

    fn eval(&self, p: &[f64], x: f64) -> f64;

    /// Writes ∂f/∂p_j at `x` into `grad`.
    fn gradient(&self, p: &[f64], x: f64, grad: &mut [f64]);

    /// Peak quantities derived from the fitted parameters.
    fn peaks(&self, _p: &[f64], _cov: &DMatrix<f64>) -> Vec<PeakSummary> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative χ² change on an accepted step.
    pub chi2_tolerance: f64,
    /// Max-norm of the projected gradient JᵀW(y − f).
    pub gradient_tolerance: f64,
    pub initial_lambda: f64,
    /// |correlation| above which the covariance is called ill-conditioned.
    pub correlation_limit: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            chi2_tolerance: 1e-10,
            gradient_tolerance: 1e-10,
            initial_lambda: 1e-3,
            correlation_limit: 0.995,
        }
    }
}

/// Smallest eigenvalue ratio of the column-scaled normal matrix still treated as full rank.
const RANK_TOLERANCE: f64 = 1e-12;
const MAX_LAMBDA: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroResidual,
    Chi2Tolerance,
    GradientTolerance,
    /// No damped step reduced χ²; the point is a minimum to rounding.
    NoImprovement,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    pub center: f64,
    pub center_err: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub fwhm: f64,
    pub fwhm_err: f64,
    pub area: f64,
    pub area_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    /// Square roots of the covariance diagonal.
    pub uncertainties: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub reduced_chi2: f64,
    /// Covariance multiplied by the reduced χ² (no sigma was supplied).
    pub covariance_scaled: bool,
    pub initial_residual_norm: f64,
    /// √χ² at the returned parameters.
    pub residual_norm: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub rank_deficient: bool,
    pub ill_conditioned: bool,
    pub max_abs_correlation: f64,
    /// Names of parameters sitting on a bound.
    pub active_bounds: Vec<String>,
    /// The data cannot constrain the model (e.g. constant input to a decay).
    pub degenerate: bool,
    pub warnings: Vec<String>,
    pub peaks: Vec<PeakSummary>,
}

impl FitResult {
    pub fn covariance_reliable(&self) -> bool {
        self.converged && !self.rank_deficient && self.dof > 0
    }

    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.param_names.iter().position(|n| n == name)?;
        Some((self.params[i], self.uncertainties[i]))
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.params.len();
        DMatrix::from_fn(n, n, |i, j| self.covariance[i][j])
    }
}

pub fn lm_fit<M: FitModel + ?Sized>(model: &M, x: &[f64], y: &[f64], sigma: Option<&[f64]>, init: &[f64]) -> Result<FitResult> {
    lm_fit_with(model, x, y, sigma, init, &LmOptions::default())
}

pub fn lm_fit_with<M: FitModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    init: &[f64],
    opts: &LmOptions,
) -> Result<FitResult> {
    let names = model.param_names();
    let bounds = model.bounds();
    let np = names.len();
    check_inputs(x, y, sigma, init, np, &bounds, &names)?;
    let weights: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / s).collect(),
        None => vec![1.0; x.len()],
    };
    let problem = Problem { model, x, y, weights: &weights, np };

    let mut p = init.to_vec();
    let mut chi2 = problem.chi2(&p)?;
    let initial_residual_norm = chi2.sqrt();
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let (mut jtj, mut grad) = problem.normal_equations(&p);

    while iterations < opts.max_iterations {
        if chi2 == 0.0 {
            termination = Termination::ZeroResidual;
            break;
        }
        if projected_gradient_norm(&grad, &p, &bounds) < opts.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        if lambda > MAX_LAMBDA {
            termination = Termination::NoImprovement;
            break;
        }
        iterations += 1;
        let Some(step) = damped_step(&jtj, &grad, lambda) else {
            lambda *= 10.0;
            continue;
        };
        let trial: Vec<f64> = p
            .iter()
            .zip(step.iter())
            .zip(&bounds)
            .map(|((pi, di), (lo, hi))| (pi + di).clamp(*lo, *hi))
            .collect();
        if trial == p {
            lambda *= 10.0;
            continue;
        }
        let trial_chi2 = problem.chi2(&trial)?;
        if trial_chi2 < chi2 {
            let relative = (chi2 - trial_chi2) / chi2;
            p = trial;
            chi2 = trial_chi2;
            (jtj, grad) = problem.normal_equations(&p);
            lambda = (lambda / 10.0).max(1e-12);
            if relative < opts.chi2_tolerance {
                termination = Termination::Chi2Tolerance;
                break;
            }
        } else {
            lambda *= 10.0;
        }
    }

    let n = x.len();
    let dof = n - np;
    let reduced_chi2 = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };
    let converged = termination != Termination::MaxIterations;
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("no convergence after {} iterations", opts.max_iterations));
    }

    let (mut cov, rank_deficient) = invert_normal_matrix(&jtj);
    if rank_deficient {
        warnings.push("Jacobian is rank deficient at the optimum; covariance unreliable".into());
    }
    let covariance_scaled = sigma.is_none() && dof > 0;
    if covariance_scaled {
        cov *= reduced_chi2;
    }
    if dof == 0 {
        warnings.push("no degrees of freedom; uncertainties are not estimable".into());
    }
    let max_abs_correlation = max_correlation(&cov);
    let ill_conditioned = rank_deficient || max_abs_correlation > opts.correlation_limit;
    if ill_conditioned && !rank_deficient {
        warnings.push(format!("parameters nearly degenerate (|correlation| = {max_abs_correlation:.6})"));
    }
    let active_bounds: Vec<String> = p
        .iter()
        .zip(&bounds)
        .zip(&names)
        .filter(|((v, (lo, hi)), _)| *v == lo || *v == hi)
        .map(|(_, name)| name.clone())
        .collect();
    if !active_bounds.is_empty() {
        warnings.push(format!("parameters at a bound: {}", active_bounds.join(", ")));
    }

    let peaks = model.peaks(&p, &cov);
    Ok(FitResult {
        model: model.name(),
        param_names: names,
        uncertainties: (0..np).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        covariance: (0..np).map(|i| (0..np).map(|j| cov[(i, j)]).collect()).collect(),
        params: p,
        chi2,
        dof,
        reduced_chi2,
        covariance_scaled,
        initial_residual_norm,
        residual_norm: chi2.sqrt(),
        n_iterations: iterations,
        converged,
        termination,
        rank_deficient,
        ill_conditioned,
        max_abs_correlation,
        active_bounds,
        degenerate: false,
        warnings,
        peaks,
    })
}

fn check_inputs(
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    init: &[f64],
    np: usize,
    bounds: &[(f64, f64)],
    names: &[String],
) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if init.len() != np {
        return Err(Error::invalid(format!("model has {np} parameters, {} initial values given", init.len())));
    }
    if x.len() < np {
        return Err(Error::invalid(format!("{} data points cannot determine {np} parameters", x.len())));
    }
    if let Some(i) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite data value at position {}", i % x.len())));
    }
    if let Some(s) = sigma {
        if s.len() != x.len() {
            return Err(Error::invalid(format!("{} sigmas for {} points", s.len(), x.len())));
        }
        if let Some(i) = s.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("sigma[{i}] = {} must be positive", s[i])));
        }
    }
    for ((v, (lo, hi)), name) in init.iter().zip(bounds).zip(names) {
        if !(v >= lo && v <= hi) {
            return Err(Error::invalid(format!("initial {name} = {v} outside bounds [{lo}, {hi}]")));
        }
    }
    Ok(())
}

struct Problem<'a, M: ?Sized> {
    model: &'a M,
    x: &'a [f64],
    y: &'a [f64],
    weights: &'a [f64],
    np: usize,
}

impl<M: FitModel + ?Sized> Problem<'_, M> {
    fn chi2(&self, p: &[f64]) -> Result<f64> {
        let mut chi2 = 0.0;
        for ((x, y), w) in self.x.iter().zip(self.y).zip(self.weights) {
            let f = self.model.eval(p, *x);
            if !f.is_finite() {
                return Err(Error::NonFiniteModel { params: p.to_vec() });
            }
            let r = (y - f) * w;
            chi2 += r * r;
        }
        Ok(chi2)
    }

    /// JᵀWJ and JᵀW(y − f), with weights applied to rows.
    fn normal_equations(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let mut jtj = DMatrix::zeros(self.np, self.np);
        let mut g = DVector::zeros(self.np);
        let mut row = vec![0.0; self.np];
        for ((x, y), w) in self.x.iter().zip(self.y).zip(self.weights) {
            self.model.gradient(p, *x, &mut row);
            let r = (y - self.model.eval(p, *x)) * w;
            for a in 0..self.np {
                let ja = row[a] * w;
                g[a] += ja * r;
                for b in 0..=a {
                    jtj[(a, b)] += ja * row[b] * w;
                }
            }
        }
        jtj.fill_upper_triangle_with_lower_triangle();
        (jtj, g)
    }
}

fn damped_step(jtj: &DMatrix<f64>, grad: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let scale = jtj.diagonal().max().max(f64::MIN_POSITIVE);
    let mut a = jtj.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda * jtj[(i, i)].max(1e-15 * scale);
    }
    let step = a.cholesky()?.solve(grad);
    step.iter().all(|v| v.is_finite()).then_some(step)
}

fn projected_gradient_norm(grad: &DVector<f64>, p: &[f64], bounds: &[(f64, f64)]) -> f64 {
    grad.iter()
        .zip(p)
        .zip(bounds)
        .map(|((g, v), (lo, hi))| {
            let blocked = (v <= lo && *g < 0.0) || (v >= hi && *g > 0.0);
            if blocked { 0.0 } else { g.abs() }
        })
        .fold(0.0, f64::max)
}

/// Inverse of JᵀWJ via the eigen-decomposition of its column-scaled form.
/// Near-null directions are dropped (pseudo-inverse) and flagged.
fn invert_normal_matrix(jtj: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = jtj.nrows();
    let d: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(0.0).sqrt()).collect();
    let mut rank_deficient = d.contains(&0.0);
    let inv_d: Vec<f64> = d.iter().map(|v| if *v > 0.0 { 1.0 / v } else { 0.0 }).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] * inv_d[i] * inv_d[j]);
    let eig = SymmetricEigen::new(scaled);
    let max_eig = eig.eigenvalues.max();
    let mut inv = DMatrix::zeros(n, n);
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > RANK_TOLERANCE * max_eig {
            let v = eig.eigenvectors.column(k);
            inv += v * v.transpose() / ev;
        } else {
            rank_deficient = true;
        }
    }
    (DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * inv_d[i] * inv_d[j]), rank_deficient)
}

fn max_correlation(cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            let denom = (cov[(i, i)] * cov[(j, j)]).sqrt();
            if denom > 0.0 {
                worst = worst.max((cov[(i, j)] / denom).abs());
            }
        }
    }
    worst
}

/// Variance of g(p) from its gradient: ∇gᵀ·C·∇g.
pub fn propagate(cov: &DMatrix<f64>, gradient: &[(usize, f64)]) -> f64 {
    let mut var = 0.0;
    for &(i, gi) in gradient {
        for &(j, gj) in gradient {
            var += gi * gj * cov[(i, j)];
        }
    }
    var.max(0.0)
}

/// Five-point central finite-difference gradient, step scaled to each parameter.
pub fn finite_difference_gradient<M: FitModel + ?Sized>(model: &M, p: &[f64], x: f64, rel_step: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    let mut at = |j: usize, v: f64| {
        q[j] = v;
        let y = model.eval(&q, x);
        q[j] = p[j];
        y
    };
    (0..p.len())
        .map(|j| {
            let h = rel_step * p[j].abs().max(1.0);
            let (f1, f2) = (at(j, p[j] + h) - at(j, p[j] - h), at(j, p[j] + 2.0 * h) - at(j, p[j] - 2.0 * h));
            (8.0 * f1 - f2) / (12.0 * h)
        })
        .collect()
}

/// Largest gap between the analytic gradient and central differences at `x`,
/// relative to max(|analytic|, |numeric|, 1e-3·‖analytic‖∞).
pub fn gradient_relative_error<M: FitModel + ?Sized>(model: &M, p: &[f64], x: f64) -> f64 {
    let mut analytic = vec![0.0; p.len()];
    model.gradient(p, x, &mut analytic);
    let numeric = finite_difference_gradient(model, p, x, 1e-4);
    let scale = 1e-3 * analytic.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let denom = a.abs().max(n.abs()).max(scale);
            if denom == 0.0 { 0.0 } else { (a - n).abs() / denom }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exp;

    impl FitModel for Exp {
        fn name(&self) -> String {
            "exp".into()
        }
        fn param_names(&self) -> Vec<String> {
            vec!["a".into(), "k".into()]
        }
        fn bounds(&self) -> Vec<(f64, f64)> {
            vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, 10.0)]
        }
        fn eval(&self, p: &[f64], x: f64) -> f64 {
            p[0] * (-p[1] * x).exp()
        }
        fn gradient(&self, p: &[f64], x: f64, g: &mut [f64]) {
            let e = (-p[1] * x).exp();
            g[0] = e;
            g[1] = -p[0] * x * e;
        }
    }

    #[test]
    fn exact_data_recovered() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|x| Exp.eval(&[2.0, 0.7], *x)).collect();
        let fit = lm_fit(&Exp, &x, &y, None, &[2.2, 0.63]).unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] - 2.0).abs() < 1e-8);
        assert!((fit.params[1] - 0.7).abs() < 1e-8);
        assert!(fit.residual_norm <= fit.initial_residual_norm);
    }

    #[test]
    fn bound_is_reported() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.0 + 0.1 * x).collect();
        let fit = lm_fit(&Exp, &x, &y, None, &[1.0, 0.5]).unwrap();
        assert_eq!(fit.params[1], 0.0);
        assert_eq!(fit.active_bounds, vec!["k".to_string()]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = [0.0, 1.0, 2.0];
        assert!(lm_fit(&Exp, &x, &[1.0, 2.0], None, &[1.0, 1.0]).is_err());
        assert!(lm_fit(&Exp, &x, &[1.0; 3], None, &[1.0]).is_err());
        assert!(lm_fit(&Exp, &x, &[1.0; 3], None, &[1.0, 20.0]).is_err());
        assert!(lm_fit(&Exp, &[0.0], &[1.0], None, &[1.0, 1.0]).is_err());
        assert!(lm_fit(&Exp, &x, &[1.0; 3], Some(&[1.0, 0.0, 1.0]), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn non_finite_model_reports_parameters() {
        struct Bad;
        impl FitModel for Bad {
            fn name(&self) -> String {
                "bad".into()
            }
            fn param_names(&self) -> Vec<String> {
                vec!["p".into()]
            }
            fn eval(&self, p: &[f64], x: f64) -> f64 {
                p[0].ln() * x
            }
            fn gradient(&self, p: &[f64], x: f64, g: &mut [f64]) {
                g[0] = x / p[0];
            }
        }
        match lm_fit(&Bad, &[1.0, 2.0], &[0.0, 0.0], None, &[-1.0]) {
            Err(Error::NonFiniteModel { params }) => assert_eq!(params, vec![-1.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pseudo_inverse_flags_rank_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, deficient) = invert_normal_matrix(&m);
        assert!(deficient);
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (inv, deficient) = invert_normal_matrix(&m);
        assert!(!deficient);
        assert!((inv * m - DMatrix::identity(2, 2)).abs().max() < 1e-14);
    }
}
