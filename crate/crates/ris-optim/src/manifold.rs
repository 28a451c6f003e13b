//! Gradient descent on the product of complex circles (unit-modulus vectors).
//!
//! Handles the phase-shift subproblems: translated quadratics
//! `f(phi) = phi^H B phi - 2 Re{phi^H c}` and arbitrary smooth objectives
//! supplied through value/gradient callbacks. Steps are projected onto the
//! tangent space, sized by Armijo backtracking, and retracted by elementwise
//! normalization, so every iterate stays on the manifold and the objective
//! never increases.

use crate::error::{Result, RisError};
use crate::linalg::{C64, CMat, CVec};

/// A point with unit-modulus entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CirclePoint {
    pub phi: CVec,
}

impl CirclePoint {
    /// Wrap a vector, checking the unit-modulus invariant.
    pub fn new(phi: CVec) -> Result<Self> {
        for (i, z) in phi.iter().enumerate() {
            if (z.norm() - 1.0).abs() > 1e-12 {
                return Err(RisError::Numerical(format!(
                    "entry {i} has modulus {} (must be 1 within 1e-12)",
                    z.norm()
                )));
            }
        }
        Ok(CirclePoint { phi })
    }

    /// Project an arbitrary nonzero vector onto the manifold.
    pub fn project(phi: &CVec) -> Result<Self> {
        retract(phi)
    }
}

/// Line-search and stopping parameters.
#[derive(Debug, Clone)]
pub struct ManifoldParams {
    pub max_iter: usize,
    /// Stop when `|f_next - f| / (1 + |f_next|)` drops below this.
    pub rel_tol: f64,
    /// Backtracking shrink factor in (0, 1).
    pub shrink: f64,
    /// Armijo sufficient-decrease coefficient.
    pub armijo: f64,
    /// Initial step size.
    pub beta0: f64,
}

impl Default for ManifoldParams {
    fn default() -> Self {
        ManifoldParams { max_iter: 500, rel_tol: 1e-8, shrink: 0.5, armijo: 1e-4, beta0: 1.0 }
    }
}

impl ManifoldParams {
    /// Step scale suited to a quadratic with matrix `B`.
    pub fn for_quadratic(b: &CMat) -> Self {
        let fro = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        ManifoldParams { beta0: 1.0 / (2.0 * fro + 1e-30), ..Self::default() }
    }
}

/// Objective over the circle manifold. `gradient` returns the Euclidean
/// gradient of `value` with respect to the complex entries (the `2 df/dphi*`
/// convention: `value(phi + d) ~ value(phi) + Re{<gradient, d>}`).
pub trait CircleObjective {
    fn value(&self, phi: &CVec) -> f64;
    fn gradient(&self, phi: &CVec) -> CVec;
}

/// Translated quadratic `phi^H B phi - 2 Re{phi^H c}` with Hermitian `B`.
pub struct QuadraticObjective<'a> {
    pub b: &'a CMat,
    pub c: &'a CVec,
}

impl CircleObjective for QuadraticObjective<'_> {
    fn value(&self, phi: &CVec) -> f64 {
        let bphi = self.b * phi;
        let quad = phi.dotc(&bphi).re;
        let lin = phi.dotc(self.c).re;
        quad - 2.0 * lin
    }

    fn gradient(&self, phi: &CVec) -> CVec {
        // Negative of the descent direction below.
        euclidean_grad_quadratic(self.b, self.c, phi).map(|z| -z)
    }
}

/// Descent direction `-grad f = -2 B phi + 2 c` of the translated quadratic.
pub fn euclidean_grad_quadratic(b: &CMat, c: &CVec, phi: &CVec) -> CVec {
    let bphi = b * phi;
    CVec::from_fn(phi.len(), |i, _| (c[i] - bphi[i]) * 2.0)
}

/// Tangent-space projection at `phi`: removes the radial component so that
/// `Re{p_m conj(phi_m)} = 0` for every entry.
pub fn project_tangent(g: &CVec, phi: &CVec) -> CVec {
    CVec::from_fn(g.len(), |i, _| {
        let radial = (g[i] * phi[i].conj()).re;
        g[i] - phi[i] * radial
    })
}

/// Retraction: elementwise normalization back onto the circles.
pub fn retract(phi_bar: &CVec) -> Result<CirclePoint> {
    let mut phi = CVec::zeros(phi_bar.len());
    for i in 0..phi_bar.len() {
        let n = phi_bar[i].norm();
        if n < 1e-14 {
            return Err(RisError::Numerical(format!(
                "degenerate retraction: entry {i} has modulus {n:e}"
            )));
        }
        phi[i] = phi_bar[i] / n;
    }
    Ok(CirclePoint { phi })
}

/// Retraction that keeps the previous phase of any (measure-zero) entry that
/// lands on the origin.
fn retract_or_keep(phi_bar: &CVec, prev: &CVec) -> CVec {
    CVec::from_fn(phi_bar.len(), |i, _| {
        let n = phi_bar[i].norm();
        if n < 1e-14 {
            prev[i]
        } else {
            phi_bar[i] / n
        }
    })
}

/// Convergence trace of one manifold solve.
#[derive(Debug, Clone)]
pub struct ManifoldTrace {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected-gradient descent with Armijo backtracking (retraction after
/// every step). The iterate sequence is non-increasing in `f`.
pub fn minimize_on_circles<O: CircleObjective>(
    objective: &O,
    phi0: &CirclePoint,
    params: &ManifoldParams,
) -> Result<(CirclePoint, ManifoldTrace)> {
    let mut phi = phi0.phi.clone();
    let mut fval = objective.value(&phi);
    if !fval.is_finite() {
        return Err(RisError::Numerical(format!("objective non-finite at start: {fval}")));
    }
    let mut values = vec![fval];
    let mut converged = false;
    let mut iterations = 0;
    let mut beta_next = params.beta0;

    for _ in 0..params.max_iter {
        iterations += 1;
        let grad = objective.gradient(&phi);
        if grad.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(RisError::Numerical(format!(
                "gradient non-finite at iteration {iterations}"
            )));
        }
        let direction = project_tangent(&grad.map(|z| -z), &phi);
        let dir_sq: f64 = direction.iter().map(|z| z.norm_sqr()).sum();
        if dir_sq <= 0.0 {
            converged = true;
            break;
        }

        // Backtracking with carry-over: start from twice the last accepted
        // step (capped at 1e6 beta0) so a conservative beta0 cannot throttle
        // the whole descent.
        let mut beta = beta_next;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = retract_or_keep(&(&phi + &direction * C64::new(beta, 0.0)), &phi);
            let fc = objective.value(&candidate);
            if !fc.is_finite() {
                return Err(RisError::Numerical(format!(
                    "objective non-finite during line search at iteration {iterations}"
                )));
            }
            if fc <= fval - params.armijo * beta * dir_sq {
                accepted = Some((candidate, fc));
                break;
            }
            beta *= params.shrink;
        }
        let Some((mut next, mut fnext)) = accepted else {
            // No decrease found at any step size: stationary to machine precision.
            converged = true;
            break;
        };
        // Overshoot polish: an accepted step that mirrors past a minimum
        // still satisfies Armijo, so keep halving while that helps.
        for _ in 0..30 {
            let half = beta * 0.5;
            let candidate = retract_or_keep(&(&phi + &direction * C64::new(half, 0.0)), &phi);
            let fc = objective.value(&candidate);
            if fc.is_finite() && fc < fnext {
                next = candidate;
                fnext = fc;
                beta = half;
            } else {
                break;
            }
        }
        beta_next = (beta * 2.0).min(params.beta0 * 1e6);

        let delta = (fnext - fval).abs() / (1.0 + fnext.abs());
        phi = next;
        fval = fnext;
        values.push(fval);
        if delta <= params.rel_tol {
            converged = true;
            break;
        }
    }

    Ok((CirclePoint { phi }, ManifoldTrace { values, iterations, converged }))
}

/// Convenience wrapper for the quadratic subproblems.
pub fn minimize_quadratic_on_circles(
    b: &CMat,
    c: &CVec,
    phi0: &CirclePoint,
    params: &ManifoldParams,
) -> Result<(CirclePoint, ManifoldTrace)> {
    let obj = QuadraticObjective { b, c };
    minimize_on_circles(&obj, phi0, params)
}
