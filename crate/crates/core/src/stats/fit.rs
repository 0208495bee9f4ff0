//! Least-squares fitting for the three model families the toolkit needs:
//! a quadratic (closed form via normal equations), a Gaussian dip and a
//! fixed-period sinusoid (Levenberg-Marquardt damped Gauss-Newton).

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `c2 x^2 + c1 x + c0`, parameters `[c2, c1, c0]`.
    Quadratic,
    /// `B (1 - V exp(-(x - x0)^2 / (2 w^2)))`, parameters `[B, V, x0, w]`.
    GaussianDip,
    /// `A (1 + V cos(x + phi0))` with `x` in radians, parameters `[A, V, phi0]`.
    SinusoidFixedPeriod,
}

impl FitModel {
    pub fn n_params(self) -> usize {
        match self {
            FitModel::Quadratic | FitModel::SinusoidFixedPeriod => 3,
            FitModel::GaussianDip => 4,
        }
    }

    pub fn eval(self, p: &[f64], x: f64) -> f64 {
        match self {
            FitModel::Quadratic => (p[0] * x + p[1]) * x + p[2],
            FitModel::GaussianDip => {
                let g = (-(x - p[2]).powi(2) / (2.0 * p[3] * p[3])).exp();
                p[0] * (1.0 - p[1] * g)
            }
            FitModel::SinusoidFixedPeriod => p[0] * (1.0 + p[1] * (x + p[2]).cos()),
        }
    }

    /// Partial derivatives of the model w.r.t. each parameter.
    fn gradient(self, p: &[f64], x: f64, out: &mut [f64]) {
        match self {
            FitModel::Quadratic => {
                out[0] = x * x;
                out[1] = x;
                out[2] = 1.0;
            }
            FitModel::GaussianDip => {
                let (b, v, c, w) = (p[0], p[1], p[2], p[3]);
                let d = x - c;
                let g = (-d * d / (2.0 * w * w)).exp();
                out[0] = 1.0 - v * g;
                out[1] = -b * g;
                out[2] = -b * v * g * d / (w * w);
                out[3] = -b * v * g * d * d / (w * w * w);
            }
            FitModel::SinusoidFixedPeriod => {
                let (a, v, phi) = (p[0], p[1], p[2]);
                out[0] = 1.0 + v * (x + phi).cos();
                out[1] = a * (x + phi).cos();
                out[2] = -a * v * (x + phi).sin();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged once `|step| <= rel_step_tol * (|params| + rel_step_tol)`.
    pub rel_step_tol: f64,
    /// Per-point weights (inverse variances). `None` is ordinary least squares.
    pub weights: Option<Vec<f64>>,
    pub initial: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            rel_step_tol: 1e-10,
            weights: None,
            initial: None,
        }
    }
}

impl FitOptions {
    /// Weights `1 / max(y, 1)`, the usual choice for counting data.
    pub fn poisson_weights(ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| 1.0 / y.max(1.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<f64>,
    /// Linearized standard errors `sqrt(diag(s^2 (J^T W J)^-1))`; NaN for
    /// parameters the data do not constrain.
    pub std_errors: Vec<f64>,
    /// `sqrt(sum w r^2)` at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Weighted squared residual after the initial guess and each accepted step.
    pub cost_history: Vec<f64>,
}

impl FitResult {
    pub fn eval(&self, x: f64) -> f64 {
        self.model.eval(&self.params, x)
    }
}

pub fn least_squares(model: FitModel, xs: &[f64], ys: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let k = model.n_params();
    if xs.len() != ys.len() {
        return Err(Error::input(format!(
            "abscissa and ordinate lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < k + 1 {
        return Err(Error::input(format!(
            "{model:?} fit needs at least {} points, got {}",
            k + 1,
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::input("fit data contain non-finite values"));
    }
    let weights = match &opts.weights {
        Some(w) => {
            if w.len() != xs.len() || w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::input("weights must be positive and match the data length"));
            }
            w.clone()
        }
        None => vec![1.0; xs.len()],
    };
    if let Some(init) = &opts.initial {
        if init.len() != k || init.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("initial guess must hold {k} finite values")));
        }
    }

    match model {
        FitModel::Quadratic => fit_quadratic(xs, ys, &weights),
        _ => {
            let init = match &opts.initial {
                Some(p) => p.clone(),
                None => initial_guess(model, xs, ys)?,
            };
            let mut res = levenberg_marquardt(model, xs, ys, &weights, init, opts)?;
            canonicalize(model, &mut res.params);
            Ok(res)
        }
    }
}

fn fit_quadratic(xs: &[f64], ys: &[f64], w: &[f64]) -> Result<FitResult> {
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit {
            reason: "quadratic fit needs at least three distinct abscissae".into(),
            iterations: 0,
            residual_norm: f64::NAN,
            last_params: vec![],
        });
    }
    // Scale the abscissa to keep the normal matrix well conditioned.
    let s = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for ((&x, &y), &wi) in xs.iter().zip(ys).zip(w) {
        let u = x / s;
        let row = Vector3::new(u * u, u, 1.0);
        ata += wi * row * row.transpose();
        aty += wi * y * row;
    }
    let chol = ata.cholesky().ok_or_else(|| Error::Fit {
        reason: "normal equations are singular (collinear abscissae)".into(),
        iterations: 0,
        residual_norm: f64::NAN,
        last_params: vec![],
    })?;
    let c = chol.solve(&aty);
    let scale = [s * s, s, 1.0];
    let params: Vec<f64> = (0..3).map(|i| c[i] / scale[i]).collect();

    let cost: f64 = xs
        .iter()
        .zip(ys)
        .zip(w)
        .map(|((&x, &y), &wi)| wi * (y - FitModel::Quadratic.eval(&params, x)).powi(2))
        .sum();
    let dof = (xs.len() - 3) as f64;
    let cov = chol.inverse() * (cost / dof);
    let std_errors = (0..3).map(|i| cov[(i, i)].max(0.0).sqrt() / scale[i]).collect();
    Ok(FitResult {
        model: FitModel::Quadratic,
        params,
        std_errors,
        residual_norm: cost.sqrt(),
        iterations: 0,
        cost_history: vec![cost],
    })
}

fn weighted_cost(model: FitModel, p: &[f64], xs: &[f64], ys: &[f64], w: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .zip(w)
        .map(|((&x, &y), &wi)| wi * (y - model.eval(p, x)).powi(2))
        .sum()
}

fn levenberg_marquardt(
    model: FitModel,
    xs: &[f64],
    ys: &[f64],
    w: &[f64],
    mut p: Vec<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = xs.len();
    let k = p.len();
    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut cost = weighted_cost(model, &p, xs, ys, w);
    if !cost.is_finite() {
        return Err(Error::Fit {
            reason: "model is not finite at the initial guess".into(),
            iterations: 0,
            residual_norm: cost.sqrt(),
            last_params: p,
        });
    }
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut grad = vec![0.0; k];

    let jacobian = |p: &[f64], grad: &mut [f64]| {
        let mut j = DMatrix::<f64>::zeros(n, k);
        let mut r = DVector::<f64>::zeros(n);
        for i in 0..n {
            model.gradient(p, xs[i], grad);
            for c in 0..k {
                j[(i, c)] = sqrt_w[i] * grad[c];
            }
            r[i] = sqrt_w[i] * (ys[i] - model.eval(p, xs[i]));
        }
        (j, r)
    };

    let mut iterations = 0;
    let mut converged = cost == 0.0;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let (j, r) = jacobian(&p, &mut grad);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let max_diag = (0..k).fold(0.0f64, |m, i| m.max(jtj[(i, i)]));
        let floor = max_diag * 1e-12 + f64::MIN_POSITIVE;

        let mut accepted = false;
        while lambda <= 1e16 {
            let mut a = jtj.clone();
            for i in 0..k {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&jtr);
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_cost = weighted_cost(model, &trial, xs, ys, w);
            if trial_cost.is_finite() && trial_cost <= cost {
                let step_norm = step.norm();
                let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                p = trial;
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = step_norm <= opts.rel_step_tol * (p_norm + opts.rel_step_tol);
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No damping level lowers the cost: we sit at a minimum to
            // floating-point precision.
            converged = true;
        }
    }

    if !converged {
        return Err(Error::Fit {
            reason: format!("no convergence within {} iterations", opts.max_iterations),
            iterations,
            residual_norm: cost.sqrt(),
            last_params: p,
        });
    }

    let (j, _) = jacobian(&p, &mut grad);
    let jtj = j.transpose() * &j;
    let s2 = if n > k { cost / (n - k) as f64 } else { f64::NAN };
    let std_errors = match jtj.try_inverse() {
        Some(inv) => (0..k).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; k],
    };
    Ok(FitResult {
        model,
        params: p,
        std_errors,
        residual_norm: cost.sqrt(),
        iterations,
        cost_history: history,
    })
}

fn canonicalize(model: FitModel, p: &mut [f64]) {
    match model {
        FitModel::GaussianDip => p[3] = p[3].abs(),
        FitModel::SinusoidFixedPeriod => {
            if p[1] < 0.0 {
                p[1] = -p[1];
                p[2] += std::f64::consts::PI;
            }
            p[2] = crate::domain::wrap_phase(p[2]);
        }
        FitModel::Quadratic => {}
    }
}

/// Starting point derived from the data extrema.
pub fn initial_guess(model: FitModel, xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    match model {
        FitModel::Quadratic => Ok(vec![0.0, 0.0, ys.iter().sum::<f64>() / ys.len() as f64]),
        FitModel::GaussianDip => Ok(dip_guess(xs, ys)),
        FitModel::SinusoidFixedPeriod => sinusoid_guess(xs, ys),
    }
}

fn dip_guess(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let n = idx.len();
    let wing = n.div_ceil(5).max(1);
    let wings: Vec<f64> = idx[..wing]
        .iter()
        .chain(&idx[n - wing..])
        .map(|&i| ys[i])
        .collect();
    let baseline = wings.iter().sum::<f64>() / wings.len() as f64;

    let (min_pos, &min_i) = idx
        .iter()
        .enumerate()
        .min_by(|a, b| ys[*a.1].total_cmp(&ys[*b.1]))
        .expect("non-empty scan");
    let visibility = if baseline > 0.0 {
        1.0 - ys[min_i] / baseline
    } else {
        0.0
    };
    let center = xs[min_i];
    let span = xs[idx[n - 1]] - xs[idx[0]];

    // Half-depth crossings on either side of the minimum.
    let half = baseline * (1.0 - visibility / 2.0);
    let left = idx[..min_pos]
        .iter()
        .rev()
        .find(|&&i| ys[i] >= half)
        .map(|&i| xs[i]);
    let right = idx[min_pos + 1..]
        .iter()
        .find(|&&i| ys[i] >= half)
        .map(|&i| xs[i]);
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (center - l),
        (None, Some(r)) => 2.0 * (r - center),
        (None, None) => span / 5.0,
    };
    let width = if fwhm > 0.0 {
        fwhm / 2.354_820_045
    } else {
        span / 10.0
    };
    vec![baseline, visibility, center, width.max(f64::EPSILON)]
}

/// Exact linear least squares on `[1, cos x, sin x]`, mapped to `(A, V, phi0)`.
fn sinusoid_guess(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for (&x, &y) in xs.iter().zip(ys) {
        let row = Vector3::new(1.0, x.cos(), x.sin());
        ata += row * row.transpose();
        aty += y * row;
    }
    let c = ata
        .cholesky()
        .map(|ch| ch.solve(&aty))
        .ok_or_else(|| Error::Fit {
            reason: "phase samples do not determine a sinusoid".into(),
            iterations: 0,
            residual_norm: f64::NAN,
            last_params: vec![],
        })?;
    let a = c[0];
    let amp = c[1].hypot(c[2]);
    let v = if a != 0.0 { amp / a } else { 0.0 };
    Ok(vec![a, v, (-c[2]).atan2(c[1])])
}
