//! Nonlinear least-squares fits used by the analyses: exponential decay,
//! damped cosine, sinusoid with fixed period, and the rate-vs-detuning model
//! extracting the detection efficiency.
//!
//! The solver is a small Levenberg-Marquardt loop with an explicit damping
//! schedule: solve (JᵀWJ + λ·diag(JᵀWJ))·δ = JᵀW·r, accept the step when the
//! weighted cost decreases (λ ← λ/3), otherwise raise λ (λ ← 2λ) and retry.
//! Convergence is declared when the relative step norm falls below 1e-10.
//! All fits are deterministic; there are no stochastic restarts.

use crate::physpar::{self, SystemParams};
use serde::Serialize;

/// Scalar model y = f(x, p).
type ModelFn<'a> = &'a dyn Fn(f64, &[f64]) -> f64;
/// Analytic Jacobian row ∂f/∂p written into the output slice.
type JacobianFn<'a> = &'a dyn Fn(f64, &[f64], &mut [f64]);
use std::collections::BTreeMap;
use thiserror::Error;

/// Result of one fit: named parameter values, standard errors from the local
/// quadratic model (present only when converged), the weighted residual norm
/// and iteration diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    pub sigmas: Option<BTreeMap<String, f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iter: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.sigmas.as_ref().map(|s| s[name])
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("xs, ys and weights must have equal lengths")]
    MismatchedLengths,
    #[error("non-finite value in fit input")]
    NonFiniteInput,
    #[error("phase points must span more than pi, got {0}")]
    SpanTooSmall(f64),
    #[error("weights must be positive")]
    BadWeights,
    #[error("parameter evaluation failed: {0}")]
    Param(#[from] physpar::ParamError),
}

/// Options of the damping loop. Defaults follow the documented schedule.
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub relative_step_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            relative_step_tolerance: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

/// Poisson weights for count data: 1/max(y, 1).
pub fn poisson_weights(ys: &[f64]) -> Vec<f64> {
    ys.iter().map(|&y| 1.0 / y.max(1.0)).collect()
}

fn check_inputs(
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
    needed: usize,
) -> Result<(), FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::MismatchedLengths);
    }
    if let Some(w) = weights {
        if w.len() != xs.len() {
            return Err(FitError::MismatchedLengths);
        }
        if w.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(FitError::BadWeights);
        }
    }
    if xs.len() < needed {
        return Err(FitError::TooFewPoints { needed, got: xs.len() });
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(FitError::NonFiniteInput);
    }
    Ok(())
}

/// Core Levenberg-Marquardt loop over a scalar model y ≈ f(x, p).
#[allow(clippy::too_many_arguments)]
fn lm_fit(
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
    p0: &[f64],
    names: &[&str],
    eval: ModelFn,
    jacobian: JacobianFn,
    opts: &LmOptions,
) -> FitResult {
    let n = xs.len();
    let np = p0.len();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);

    let cost = |p: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let r = ys[i] - eval(xs[i], p);
                w(i) * r * r
            })
            .sum()
    };

    let mut p = p0.to_vec();
    let mut current_cost = cost(&p);
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut n_iter = 0;

    let mut jtj = vec![0.0; np * np];
    let mut jtr = vec![0.0; np];
    let mut row = vec![0.0; np];

    for iter in 0..opts.max_iterations {
        n_iter = iter + 1;
        jtj.iter_mut().for_each(|v| *v = 0.0);
        jtr.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            jacobian(xs[i], &p, &mut row);
            let r = ys[i] - eval(xs[i], &p);
            let wi = w(i);
            for a in 0..np {
                jtr[a] += wi * row[a] * r;
                for b in a..np {
                    jtj[a * np + b] += wi * row[a] * row[b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[a * np + b] = jtj[b * np + a];
            }
        }

        // Inner damping loop: retry with larger lambda until a step improves
        // the cost or the damping saturates.
        let mut stepped = false;
        for _ in 0..32 {
            let mut damped = jtj.clone();
            for a in 0..np {
                let d = jtj[a * np + a];
                damped[a * np + a] = d + lambda * if d > 0.0 { d } else { 1.0 };
            }
            let Some(delta) = solve_sym(&damped, &jtr, np) else {
                lambda = (lambda * 2.0).min(1e12);
                continue;
            };
            let candidate: Vec<f64> = p.iter().zip(&delta).map(|(pi, di)| pi + di).collect();
            let candidate_cost = cost(&candidate);
            if candidate_cost.is_finite() && candidate_cost <= current_cost {
                let step_norm: f64 = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
                let p_norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                p = candidate;
                current_cost = candidate_cost;
                lambda = (lambda / 3.0).max(1e-12);
                stepped = true;
                if step_norm <= opts.relative_step_tolerance * (p_norm + 1e-30) {
                    converged = true;
                }
                break;
            }
            lambda = (lambda * 2.0).min(1e12);
        }
        if converged {
            break;
        }
        if !stepped {
            // No direction improves the cost: a (local) optimum at the
            // damping ceiling.
            converged = current_cost.is_finite();
            break;
        }
    }

    let sigmas = if converged {
        covariance_sigmas(xs, weights, &p, names, jacobian, current_cost)
    } else {
        None
    };

    let params: BTreeMap<String, f64> =
        names.iter().zip(&p).map(|(n, v)| (n.to_string(), *v)).collect();
    FitResult {
        params,
        sigmas,
        residual_norm: current_cost.sqrt(),
        converged,
        n_iter,
    }
}

fn covariance_sigmas(
    xs: &[f64],
    weights: Option<&[f64]>,
    p: &[f64],
    names: &[&str],
    jacobian: JacobianFn,
    final_cost: f64,
) -> Option<BTreeMap<String, f64>> {
    let n = xs.len();
    let np = p.len();
    if n <= np {
        return None;
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut jtj = vec![0.0; np * np];
    let mut row = vec![0.0; np];
    for (i, &x) in xs.iter().enumerate() {
        jacobian(x, p, &mut row);
        let wi = w(i);
        for a in 0..np {
            for b in 0..np {
                jtj[a * np + b] += wi * row[a] * row[b];
            }
        }
    }
    let s2 = final_cost / (n - np) as f64;
    let inv = invert_sym(&jtj, np)?;
    Some(
        names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let var = (inv[k * np + k] * s2).max(0.0);
                (name.to_string(), var.sqrt())
            })
            .collect(),
    )
}

/// Gaussian elimination with partial pivoting for the small symmetric
/// systems of the damping loop. Returns None when singular.
fn solve_sym(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&r, &s| {
            m[r * n + col].abs().partial_cmp(&m[s * n + col].abs()).unwrap()
        })?;
        if m[pivot_row * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / pivot;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for k in col + 1..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x)
}

fn invert_sym(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve_sym(a, &e, n)?;
        for r in 0..n {
            inv[r * n + col] = x[r];
        }
    }
    Some(inv)
}

/// Model functions and their analytic Jacobians, exposed for the
/// finite-difference consistency checks.
pub mod models {
    /// a·e^(−rate·x) + c with p = [amplitude, rate, offset].
    pub fn exponential_eval(x: f64, p: &[f64]) -> f64 {
        p[0] * (-p[1] * x).exp() + p[2]
    }

    pub fn exponential_jacobian(x: f64, p: &[f64], out: &mut [f64]) {
        let e = (-p[1] * x).exp();
        out[0] = e;
        out[1] = -p[0] * x * e;
        out[2] = 1.0;
    }

    /// a·e^(−decay·x)·cos(freq·x + phase) + offset with
    /// p = [amplitude, decay, frequency, phase, offset]. `frequency` is
    /// angular: radians per x unit.
    pub fn damped_cosine_eval(x: f64, p: &[f64]) -> f64 {
        p[0] * (-p[1] * x).exp() * (p[2] * x + p[3]).cos() + p[4]
    }

    pub fn damped_cosine_jacobian(x: f64, p: &[f64], out: &mut [f64]) {
        let e = (-p[1] * x).exp();
        let (sin, cos) = (p[2] * x + p[3]).sin_cos();
        out[0] = e * cos;
        out[1] = -p[0] * x * e * cos;
        out[2] = -p[0] * e * sin * x;
        out[3] = -p[0] * e * sin;
        out[4] = 1.0;
    }

    /// mean + amplitude·cos(phi + phase) with p = [mean, amplitude, phase];
    /// period fixed at 2π in phi.
    pub fn sinusoid_eval(phi: f64, p: &[f64]) -> f64 {
        p[0] + p[1] * (phi + p[2]).cos()
    }

    pub fn sinusoid_jacobian(phi: f64, p: &[f64], out: &mut [f64]) {
        let (sin, cos) = (phi + p[2]).sin_cos();
        out[0] = 1.0;
        out[1] = cos;
        out[2] = -p[1] * sin;
    }

    /// η²·k where k is the precomputed per-point model rate at η = 1, with
    /// `p = [eta]`.
    pub fn eta_squared_eval(k: f64, p: &[f64]) -> f64 {
        p[0] * p[0] * k
    }

    pub fn eta_squared_jacobian(k: f64, p: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * p[0] * k;
    }
}

/// Fit a·e^(−rate·x) + c. The rate is initialized from a log-linear
/// regression of the offset-shifted data.
pub fn fit_exponential(
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
) -> Result<FitResult, FitError> {
    check_inputs(xs, ys, weights, 4)?;
    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift = 1e-3 * (y_max - y_min).max(1e-12);

    // Log-linear regression of ln(y - c0 + shift) on x.
    let c0 = y_min;
    let (mut sx, mut sy, mut sxx, mut sxy, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    for (&x, &y) in xs.iter().zip(ys) {
        let v = y - c0 + shift;
        if v > 0.0 {
            let ly = v.ln();
            sx += x;
            sy += ly;
            sxx += x * x;
            sxy += x * ly;
            count += 1.0;
        }
    }
    let denom = count * sxx - sx * sx;
    let (slope, intercept) = if denom.abs() > 1e-300 && count >= 2.0 {
        ((count * sxy - sx * sy) / denom, (sy * sxx - sx * sxy) / denom)
    } else {
        (0.0, 0.0)
    };
    let x_span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let rate0 = if slope < 0.0 { -slope } else { 1.0 / x_span.max(1e-12) };
    let a0 = intercept.exp().clamp(1e-12, 1e12);
    let p0 = [if a0.is_finite() { a0 } else { (y_max - y_min).max(1e-12) }, rate0, c0];

    Ok(lm_fit(
        xs,
        ys,
        weights,
        &p0,
        &["amplitude", "rate", "offset"],
        &models::exponential_eval,
        &models::exponential_jacobian,
        &LmOptions::default(),
    ))
}

/// Fit a·e^(−decay·x)·cos(freq·x + phase) + offset. The frequency is
/// initialized from the peak of a coarse periodogram of the detrended data.
pub fn fit_damped_cosine(xs: &[f64], ys: &[f64]) -> Result<FitResult, FitError> {
    check_inputs(xs, ys, None, 8)?;
    let n = xs.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let detrended: Vec<f64> = ys.iter().map(|y| y - mean).collect();
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x_min;
    if x_span <= 0.0 {
        return Err(FitError::NonFiniteInput);
    }

    // Coarse periodogram on a grid denser than the Fourier spacing, up to
    // roughly the mean Nyquist frequency.
    let mut best = (0.0f64, -1.0f64);
    let n_grid = 8 * n;
    let omega_max = std::f64::consts::PI * n as f64 / x_span;
    for k in 1..=n_grid {
        let omega = omega_max * k as f64 / n_grid as f64;
        let mut c = 0.0;
        let mut s = 0.0;
        for (&x, &y) in xs.iter().zip(&detrended) {
            let (sin, cos) = (omega * (x - x_min)).sin_cos();
            c += y * cos;
            s += y * sin;
        }
        let power = c * c + s * s;
        if power > best.1 {
            best = (omega, power);
        }
    }
    let omega0 = best.0.max(std::f64::consts::PI / x_span / 4.0);

    let mut c = 0.0;
    let mut s = 0.0;
    for (&x, &y) in xs.iter().zip(&detrended) {
        let (sin, cos) = (omega0 * x).sin_cos();
        c += y * cos;
        s += y * sin;
    }
    let amp0 = 2.0 * (c * c + s * s).sqrt() / n as f64;
    let phase0 = (-s).atan2(c);
    let decay0 = 1.0 / x_span;
    let p0 = [amp0.max(1e-12), decay0, omega0, phase0, mean];

    let mut result = lm_fit(
        xs,
        ys,
        None,
        &p0,
        &["amplitude", "decay", "frequency", "phase", "offset"],
        &models::damped_cosine_eval,
        &models::damped_cosine_jacobian,
        &LmOptions::default(),
    );
    canonicalize_cosine(&mut result, "amplitude", "phase");
    let freq = result.params["frequency"];
    result.params.insert("frequency".into(), freq.abs());
    Ok(result)
}

/// Fit mean + amplitude·cos(phi + phase) with period fixed at 2π in phi.
/// Reports `visibility` = amplitude/mean alongside the raw parameters.
pub fn fit_sinusoid(phis: &[f64], areas: &[f64]) -> Result<FitResult, FitError> {
    check_inputs(phis, areas, None, 5)?;
    let span = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - phis.iter().cloned().fold(f64::INFINITY, f64::min);
    if span <= std::f64::consts::PI {
        return Err(FitError::SpanTooSmall(span));
    }
    let n = phis.len() as f64;
    let mean0 = areas.iter().sum::<f64>() / n;
    let mut c = 0.0;
    let mut s = 0.0;
    for (&phi, &y) in phis.iter().zip(areas) {
        let (sin, cos) = phi.sin_cos();
        c += (y - mean0) * cos;
        s += (y - mean0) * sin;
    }
    let amp0 = 2.0 * (c * c + s * s).sqrt() / n;
    let phase0 = (-s).atan2(c);
    let p0 = [mean0, amp0.max(1e-12), phase0];

    let mut result = lm_fit(
        phis,
        areas,
        None,
        &p0,
        &["mean", "amplitude", "phase"],
        &models::sinusoid_eval,
        &models::sinusoid_jacobian,
        &LmOptions::default(),
    );
    canonicalize_cosine(&mut result, "amplitude", "phase");

    let mean = result.params["mean"];
    let amplitude = result.params["amplitude"];
    let visibility = if mean != 0.0 { amplitude / mean } else { f64::NAN };
    result.params.insert("visibility".into(), visibility);
    if let Some(sigmas) = &mut result.sigmas {
        let sig_v = if mean != 0.0 {
            let ra = sigmas["amplitude"] / mean;
            let rm = amplitude * sigmas["mean"] / (mean * mean);
            (ra * ra + rm * rm).sqrt()
        } else {
            f64::NAN
        };
        sigmas.insert("visibility".into(), sig_v);
    }
    Ok(result)
}

/// Fit the detected-pair-rate model over cavity detunings with the detection
/// efficiency as the only free parameter. All other parameters are taken
/// from `params_known` (its eta_total is ignored).
pub fn fit_rate_vs_detuning(
    delta_c_list: &[f64],
    rates: &[f64],
    params_known: &SystemParams,
) -> Result<FitResult, FitError> {
    check_inputs(delta_c_list, rates, None, 5)?;
    // Per-point model rate at eta = 1: k = s·R_c/4.
    let ks: Vec<f64> = delta_c_list
        .iter()
        .map(|&dc| {
            let p = params_known.with_delta_c(dc);
            let gamma_eff = physpar::effective_purcell_gamma(&p, dc)?;
            let s = physpar::saturation(p.omega, p.delta_a, gamma_eff)?;
            Ok::<f64, FitError>(s * physpar::collection_rate(&p)? / 4.0)
        })
        .collect::<Result<_, _>>()?;

    // Closed-form initialization: least squares of rate = eta²·k.
    let sky: f64 = ks.iter().zip(rates).map(|(k, y)| k * y).sum();
    let skk: f64 = ks.iter().map(|k| k * k).sum();
    let eta0 = if skk > 0.0 { (sky / skk).max(0.0).sqrt() } else { 0.0 };

    let mut result = lm_fit(
        &ks,
        rates,
        None,
        &[eta0],
        &["eta"],
        &models::eta_squared_eval,
        &models::eta_squared_jacobian,
        &LmOptions::default(),
    );
    let eta = result.params["eta"];
    result.params.insert("eta".into(), eta.abs());
    Ok(result)
}

/// Fold a negative cosine amplitude into a π phase shift and wrap the phase
/// to (−π, π].
fn canonicalize_cosine(result: &mut FitResult, amp_name: &str, phase_name: &str) {
    let amp = result.params[amp_name];
    let mut phase = result.params[phase_name];
    if amp < 0.0 {
        result.params.insert(amp_name.into(), -amp);
        phase += std::f64::consts::PI;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    phase = phase.rem_euclid(two_pi);
    if phase > std::f64::consts::PI {
        phase -= two_pi;
    }
    result.params.insert(phase_name.into(), phase);
}
