//! Sum-rate maximization by block-coordinate ascent on the fractional-
//! programming surrogate.
//!
//! One outer iteration refreshes the auxiliary variables in closed form
//! (`gamma` is the current SINR, `tau` the quadratic-transform multiplier),
//! then maximizes the surrogate over the beamformers and the amplification
//! gains (convex interior-point subproblems), the two phase vectors
//! (Riemannian descent on translated quadratics), and, in optimal-power mode,
//! the amplitude coefficients (cyclic exact per-element updates). Every block
//! is guarded against regression, so the surrogate and the true sum rate are
//! monotone along the run.

use std::time::Instant;

use crate::convex::QcqpProblem;
use crate::error::{Result, RisError};
use crate::linalg::{cdot, C64, CMat, CVec, RMat, RVec};
use crate::manifold::{minimize_quadratic_on_circles, CirclePoint, ManifoldParams};
use crate::model::{
    bs_power, check_constraints, equivalent_channel, init_state, ris_noise_power, sum_rate,
    BeamformerSet, RisState, Side,
};
use crate::scenario::{Mode, Scenario};
use crate::trace::{secs, BlockTimings, IterationRecord, Problem, SolveTrace};

/// Closed-form auxiliary variables of the fractional-programming transform.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    /// SINR surrogates, one per user, nonnegative.
    pub gamma: Vec<f64>,
    /// Quadratic-transform multipliers, one per user.
    pub tau: Vec<C64>,
}

/// Tuning knobs of the outer block-coordinate loop.
#[derive(Debug, Clone)]
pub struct SumRateParams {
    pub max_outer: usize,
    /// Relative sum-rate change that stops the outer loop.
    pub outer_tol: f64,
    pub manifold: ManifoldParams,
    /// Relative objective change that stops the amplitude sweeps.
    pub varsigma_tol: f64,
    pub varsigma_max_sweeps: usize,
    /// Offset for the derivative test at the right endpoint of `[0, 1]`.
    pub endpoint_delta: f64,
    pub qcqp_tol: f64,
    pub qcqp_max_newton: usize,
}

impl Default for SumRateParams {
    fn default() -> Self {
        SumRateParams {
            max_outer: 100,
            outer_tol: 1e-4,
            manifold: ManifoldParams::default(),
            varsigma_tol: 1e-6,
            varsigma_max_sweeps: 50,
            endpoint_delta: 1e-6,
            qcqp_tol: 1e-9,
            qcqp_max_newton: 600,
        }
    }
}

/// Per-user signal terms reused across the surrogate and the updates.
struct UserTerms {
    /// `h_eq^H w_j` for every j.
    inner: Vec<C64>,
    /// Full denominator: all `|h_eq^H w_j|^2` plus forwarded RIS noise plus
    /// receiver noise.
    denom_full: f64,
}

fn user_terms(scn: &Scenario, ris: &RisState, w: &BeamformerSet) -> Vec<UserTerms> {
    (0..scn.n_users())
        .map(|k| {
            let h_eq = equivalent_channel(scn, ris, k);
            let inner: Vec<C64> = w.w.iter().map(|wj| cdot(&h_eq, wj)).collect();
            let denom_full = inner.iter().map(|z| z.norm_sqr()).sum::<f64>()
                + ris_noise_power(scn, ris, k)
                + scn.config.noise_user;
            UserTerms { inner, denom_full }
        })
        .collect()
}

/// `gamma_k^* = SINR_k`, the stationary point of the Lagrangian-dual form.
pub fn update_gamma(scn: &Scenario, ris: &RisState, w: &BeamformerSet) -> Vec<f64> {
    let terms = user_terms(scn, ris, w);
    terms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let sig = t.inner[k].norm_sqr();
            sig / (t.denom_full - sig)
        })
        .collect()
}

/// `tau_k^* = sqrt(1+gamma_k) h_eq^H w_k / (full denominator)`.
pub fn update_tau(scn: &Scenario, ris: &RisState, w: &BeamformerSet, gamma: &[f64]) -> Vec<C64> {
    let terms = user_terms(scn, ris, w);
    terms
        .iter()
        .enumerate()
        .map(|(k, t)| t.inner[k] * ((1.0 + gamma[k]).sqrt() / t.denom_full))
        .collect()
}

/// `h(gamma) = sum log2(1+gamma_k) - log2(e) sum gamma_k`.
///
/// The `log2(e)` slope keeps the dual transform exact in bits: with it,
/// `gamma_k = SINR_k` is the true maximizer of `h + log2(e) g` and the
/// surrogate never exceeds the sum rate. (At the optimal auxiliaries the
/// linear terms cancel either way.)
pub fn surrogate_h(aux: &AuxState) -> f64 {
    aux.gamma.iter().map(|g| (1.0 + g).log2() - g * std::f64::consts::LOG2_E).sum()
}

/// The quadratic-transform surrogate `g` at the given state and auxiliaries.
pub fn surrogate_g(scn: &Scenario, ris: &RisState, w: &BeamformerSet, aux: &AuxState) -> f64 {
    let terms = user_terms(scn, ris, w);
    let mut total = 0.0;
    for k in 0..scn.n_users() {
        let t = &terms[k];
        let tau = aux.tau[k];
        total += 2.0 * (1.0 + aux.gamma[k]).sqrt() * (tau.conj() * t.inner[k]).re
            - tau.norm_sqr() * t.denom_full;
    }
    total
}

/// `h + log2(e) g` in bits; equals the true sum rate when the auxiliaries are
/// at their closed-form optima, and lower-bounds it everywhere else.
pub fn surrogate(scn: &Scenario, ris: &RisState, w: &BeamformerSet, aux: &AuxState) -> f64 {
    surrogate_h(aux) + std::f64::consts::LOG2_E * surrogate_g(scn, ris, w, aux)
}

fn stack_beamformers(w: &BeamformerSet) -> CVec {
    let n = w.w[0].len();
    let k = w.w.len();
    CVec::from_fn(n * k, |i, _| w.w[i / n][i % n])
}

fn unstack_beamformers(x: &CVec, n: usize, k: usize) -> BeamformerSet {
    BeamformerSet { w: (0..k).map(|j| CVec::from_fn(n, |i, _| x[j * n + i])).collect() }
}

/// Surrogate maximization over the beamformers under the BS, RIS, and
/// per-element power budgets. Keeps the incumbent when the solver cannot
/// improve on it.
pub fn update_beamformers(
    scn: &Scenario,
    ris: &RisState,
    aux: &AuxState,
    current: &BeamformerSet,
    params: &SumRateParams,
) -> Result<BeamformerSet> {
    let cfg = &scn.config;
    let n = scn.n_antennas();
    let k_users = scn.n_users();
    let nk = n * k_users;
    let m_count = scn.n_elements();

    // Shared quadratic block T = sum_k |tau_k|^2 h_eq,k h_eq,k^H.
    let channels: Vec<CVec> = (0..k_users).map(|k| equivalent_channel(scn, ris, k)).collect();
    let mut t_block = CMat::zeros(n, n);
    for k in 0..k_users {
        let h = &channels[k];
        let scale = C64::new(aux.tau[k].norm_sqr(), 0.0);
        t_block += h * h.adjoint() * scale;
    }

    let place_block = |block: &CMat| -> CMat {
        let mut full = CMat::zeros(nk, nk);
        for kb in 0..k_users {
            full.view_mut((kb * n, kb * n), (n, n)).copy_from(block);
        }
        full
    };

    let mut problem = QcqpProblem::new_complex(nk);
    let p_full = place_block(&(&t_block * C64::new(2.0, 0.0)));
    let mut q = CVec::zeros(nk);
    for k in 0..k_users {
        let coef = C64::new(2.0 * (1.0 + aux.gamma[k]).sqrt(), 0.0) * aux.tau[k];
        for i in 0..n {
            q[k * n + i] = coef * channels[k][i];
        }
    }
    problem.set_objective_complex(&p_full, &q, 0.0)?;

    // (12b) BS power.
    problem.add_quad_complex(
        &(CMat::identity(nk, nk) * C64::new(2.0, 0.0)),
        &CVec::zeros(nk),
        cfg.budget_bs,
    )?;
    // (12c) RIS power with the amplification fixed.
    let amp_sum: f64 = ris.amp.sum();
    let mut j_block = CMat::zeros(n, n);
    for m in 0..m_count {
        if ris.amp[m] == 0.0 {
            continue;
        }
        let g_m = scn.g_row(m);
        j_block += &g_m * g_m.adjoint() * C64::new(ris.amp[m], 0.0);
    }
    problem.add_quad_complex(
        &(place_block(&j_block) * C64::new(2.0, 0.0)),
        &CVec::zeros(nk),
        cfg.budget_ris - cfg.noise_ris * amp_sum,
    )?;
    // (12d) per-element supply.
    for m in 0..m_count {
        if ris.amp[m] <= 0.0 {
            continue;
        }
        let g_m = scn.g_row(m);
        let block = &g_m * g_m.adjoint() * C64::new(2.0 * ris.amp[m], 0.0);
        problem.add_quad_complex(
            &place_block(&block),
            &CVec::zeros(nk),
            cfg.budget_element - ris.amp[m] * cfg.noise_ris,
        )?;
    }

    let var_scale = (cfg.budget_bs / (2.0 * nk as f64)).sqrt();
    problem.set_var_scale(RVec::from_element(2 * nk, var_scale))?;

    let warm = crate::linalg::realify_vec(&stack_beamformers(current));
    let sol = problem.solve_with_start(params.qcqp_tol, params.qcqp_max_newton, Some(&warm))?;
    if sol.status == crate::convex::QcqpStatus::Infeasible {
        return Err(RisError::Infeasible(
            "beamformer subproblem infeasible (an element supply sits below its amplification noise floor)"
                .into(),
        ));
    }
    let candidate = unstack_beamformers(&sol.x_complex(), n, k_users);
    // Monotone guard, applicable only when the incumbent is itself feasible
    // (at the very first iteration the initial gains can overload elements).
    let incumbent_ok = {
        let rep = check_constraints(scn, ris, current, &scn.config.sinr_targets);
        rep.bs_power_slack >= -1e-9 * cfg.budget_bs
            && rep.ris_power_slack >= -1e-9 * cfg.budget_ris
            && rep.per_element_slack.iter().all(|s| *s >= -1e-9 * cfg.budget_element)
    };
    if !incumbent_ok
        || surrogate_g(scn, ris, &candidate, aux) >= surrogate_g(scn, ris, current, aux)
    {
        Ok(candidate)
    } else {
        Ok(current.clone())
    }
}

/// Affine coefficients of `h_eq,k^H w_j` as a function of the amplitude
/// gains `s` (with `s_m = sqrt(a_m)`): value `d + m^T s`.
fn amp_affine(scn: &Scenario, ris: &RisState, w: &BeamformerSet, k: usize, j: usize) -> (C64, CVec) {
    let side = scn.side(k);
    let phi = ris.phi(side);
    let gw = &scn.g * &w.w[j];
    let d = cdot(&scn.h_d[k], &w.w[j]);
    let m = CVec::from_fn(scn.n_elements(), |i, _| {
        scn.h_r[k][i].conj() * phi[i] * gw[i] * C64::new(ris.e(i, side), 0.0)
    });
    (d, m)
}

/// Surrogate maximization over the per-element amplitude gains `sqrt(a_m)`
/// under the RIS budget and element supply limits.
pub fn update_amplification(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    aux: &AuxState,
    params: &SumRateParams,
) -> Result<RVec> {
    let cfg = &scn.config;
    let m_count = scn.n_elements();
    let k_users = scn.n_users();

    // Quadratic -g(s) = 1/2 s^T P s - q^T s + const over the real gains.
    let mut p = RMat::zeros(m_count, m_count);
    let mut q = RVec::zeros(m_count);
    for k in 0..k_users {
        let tau2 = aux.tau[k].norm_sqr();
        let side = scn.side(k);
        for j in 0..k_users {
            let (d, mvec) = amp_affine(scn, ris, w, k, j);
            let re_m = RVec::from_fn(m_count, |i, _| mvec[i].re);
            let im_m = RVec::from_fn(m_count, |i, _| mvec[i].im);
            p.ger(2.0 * tau2, &re_m, &re_m, 1.0);
            p.ger(2.0 * tau2, &im_m, &im_m, 1.0);
            q -= RVec::from_fn(m_count, |i, _| 2.0 * tau2 * (d.conj() * mvec[i]).re);
            if j == k {
                let coef = 2.0 * (1.0 + aux.gamma[k]).sqrt();
                q += RVec::from_fn(m_count, |i, _| coef * (aux.tau[k].conj() * mvec[i]).re);
            }
        }
        // Forwarded-noise quadratic: sigma_v^2 sum_m e_m^2 |h_r,k,m|^2 s_m^2.
        for i in 0..m_count {
            let e = ris.e(i, side);
            p[(i, i)] += 2.0 * tau2 * cfg.noise_ris * e * e * scn.h_r[k][i].norm_sqr();
        }
    }

    let mut problem = QcqpProblem::new_real(m_count);
    problem.set_objective_real(p, q, 0.0)?;

    // Incident power per element fixes both constraint families.
    let rho: Vec<f64> = (0..m_count)
        .map(|m| {
            let g_m = scn.g_row(m);
            w.w.iter().map(|wk| cdot(&g_m, wk).norm_sqr()).sum::<f64>()
        })
        .collect();
    // (20b) RIS budget: sum_m s_m^2 (rho_m + sigma_v^2) <= P_R.
    problem.add_diag_quad(
        RVec::from_fn(m_count, |i, _| 2.0 * (rho[i] + cfg.noise_ris)),
        RVec::zeros(m_count),
        cfg.budget_ris,
    )?;
    // Per-element cap a_m <= c_m and sign s_m >= 0.
    let caps: Vec<f64> =
        (0..m_count).map(|m| cfg.budget_element / (rho[m] + cfg.noise_ris)).collect();
    for m in 0..m_count {
        let mut d = RVec::zeros(m_count);
        d[m] = 2.0;
        problem.add_diag_quad(d, RVec::zeros(m_count), caps[m])?;
        let mut a = RVec::zeros(m_count);
        a[m] = -1.0;
        problem.add_linear(a, 0.0)?;
    }
    problem.set_var_scale(RVec::from_fn(m_count, |i, _| caps[i].sqrt().max(1e-12)))?;

    let warm = RVec::from_fn(m_count, |i, _| ris.amp[i].sqrt());
    let sol = problem.solve_with_start(params.qcqp_tol, params.qcqp_max_newton, Some(&warm))?;
    if sol.status == crate::convex::QcqpStatus::Infeasible {
        return Err(RisError::Infeasible("amplification subproblem infeasible".into()));
    }
    let s = sol.x_real();
    let amp = RVec::from_fn(m_count, |i, _| (s[i].max(0.0)).powi(2));

    // Monotone guard against the incumbent gains (when those are feasible).
    let incumbent_ok = {
        let total: f64 = (0..m_count).map(|m| ris.amp[m] * (rho[m] + cfg.noise_ris)).sum();
        total <= cfg.budget_ris * (1.0 + 1e-9)
            && (0..m_count)
                .all(|m| ris.amp[m] * (rho[m] + cfg.noise_ris) <= cfg.budget_element * (1.0 + 1e-9))
    };
    let mut trial = ris.clone();
    trial.amp = amp;
    if !incumbent_ok || surrogate_g(scn, &trial, w, aux) >= surrogate_g(scn, ris, w, aux) {
        Ok(trial.amp)
    } else {
        Ok(ris.amp.clone())
    }
}

/// Quadratic data `(B, c)` of the phase subproblem for one side:
/// minimizing `phi^H B phi - 2 Re{phi^H c}` maximizes the surrogate.
pub fn build_phase_quadratic(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    aux: &AuxState,
    side: Side,
) -> (CMat, CVec) {
    let m_count = scn.n_elements();
    let k_users = scn.n_users();
    let users: &[usize] = match side {
        Side::Reflect => &scn.set_r,
        Side::Transmit => &scn.set_t,
    };
    let mut b = CMat::zeros(m_count, m_count);
    let mut c = CVec::zeros(m_count);
    for &k in users {
        let tau = aux.tau[k];
        let tau2 = tau.norm_sqr();
        for j in 0..k_users {
            // r_{k,j,m} = h_r,k,m e_m sqrt(a_m) conj((G w_j)_m).
            let gw = &scn.g * &w.w[j];
            let r = CVec::from_fn(m_count, |i, _| {
                scn.h_r[k][i] * gw[i].conj() * C64::new(ris.e(i, side) * ris.amp[i].sqrt(), 0.0)
            });
            b += &r * r.adjoint() * C64::new(tau2, 0.0);
            let dkj = cdot(&scn.h_d[k], &w.w[j]);
            c -= &r * (C64::new(tau2, 0.0) * dkj);
            if j == k {
                c += &r * (tau * C64::new((1.0 + aux.gamma[k]).sqrt(), 0.0));
            }
        }
    }
    (b, c)
}

/// Spec-named wrappers for the two sides.
pub fn build_phase_quadratic_r(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    aux: &AuxState,
) -> (CMat, CVec) {
    build_phase_quadratic(scn, ris, w, aux, Side::Reflect)
}

pub fn build_phase_quadratic_t(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    aux: &AuxState,
) -> (CMat, CVec) {
    build_phase_quadratic(scn, ris, w, aux, Side::Transmit)
}

/// Riemannian descent on both phase quadratics from the current iterates.
pub fn update_phases(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    aux: &AuxState,
    params: &SumRateParams,
) -> Result<(CVec, CVec)> {
    let solve_side = |side: Side, start: &CVec| -> Result<CVec> {
        let users_empty = match side {
            Side::Reflect => scn.set_r.is_empty(),
            Side::Transmit => scn.set_t.is_empty(),
        };
        if users_empty {
            return Ok(start.clone());
        }
        let (b, c) = build_phase_quadratic(scn, ris, w, aux, side);
        let mp = ManifoldParams {
            beta0: ManifoldParams::for_quadratic(&b).beta0,
            ..params.manifold.clone()
        };
        let phi0 = CirclePoint::new(start.clone())?;
        let (opt, _) = minimize_quadratic_on_circles(&b, &c, &phi0, &mp)?;
        Ok(opt.phi)
    };
    let phi_r = solve_side(Side::Reflect, &ris.phi_r)?;
    let phi_t = solve_side(Side::Transmit, &ris.phi_t)?;
    Ok((phi_r, phi_t))
}

/// Quadratic data of the amplitude-coefficient subproblem:
/// minimize `s^T Q_r s - 2 Re{s^T b_r} + st^T Q_t st - 2 Re{st^T b_t}` with
/// `st = sqrt(1 - s^2)` elementwise.
#[derive(Debug, Clone)]
pub struct VarsigmaQuadratics {
    pub q_r: CMat,
    pub q_t: CMat,
    pub b_r: CVec,
    pub b_t: CVec,
}

pub fn build_varsigma_quadratics(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    aux: &AuxState,
) -> VarsigmaQuadratics {
    let m_count = scn.n_elements();
    let k_users = scn.n_users();
    let mut q_r = CMat::zeros(m_count, m_count);
    let mut q_t = CMat::zeros(m_count, m_count);
    let mut b_r = CVec::zeros(m_count);
    let mut b_t = CVec::zeros(m_count);
    for k in 0..k_users {
        let side = scn.side(k);
        let phi = ris.phi(side);
        let tau = aux.tau[k];
        let tau2 = tau.norm_sqr();
        let (q, b) = match side {
            Side::Reflect => (&mut q_r, &mut b_r),
            Side::Transmit => (&mut q_t, &mut b_t),
        };
        for j in 0..k_users {
            // u_{k,j,m} = h_r,k,m sqrt(a_m) conj(phi_m (G w_j)_m).
            let gw = &scn.g * &w.w[j];
            let u = CVec::from_fn(m_count, |i, _| {
                scn.h_r[k][i] * (phi[i] * gw[i]).conj() * C64::new(ris.amp[i].sqrt(), 0.0)
            });
            *q += &u * u.adjoint() * C64::new(tau2, 0.0);
            let dkj = cdot(&scn.h_d[k], &w.w[j]);
            *b -= &u * (C64::new(tau2, 0.0) * dkj);
            if j == k {
                *b += &u * (tau * C64::new((1.0 + aux.gamma[k]).sqrt(), 0.0));
            }
        }
        // Forwarded-noise diagonal sigma_v^2 |h_r,k,m|^2 a_m.
        for i in 0..m_count {
            q[(i, i)] += C64::new(
                tau2 * scn.config.noise_ris * scn.h_r[k][i].norm_sqr() * ris.amp[i],
                0.0,
            );
        }
    }
    VarsigmaQuadratics { q_r, q_t, b_r, b_t }
}

/// Value of the amplitude objective (to minimize) at `varsigma`.
pub fn varsigma_objective(quads: &VarsigmaQuadratics, varsigma: &RVec) -> f64 {
    let m = varsigma.len();
    let s = CVec::from_fn(m, |i, _| C64::new(varsigma[i], 0.0));
    let st = CVec::from_fn(m, |i, _| {
        C64::new((1.0 - varsigma[i] * varsigma[i]).max(0.0).sqrt(), 0.0)
    });
    let quad_r = s.dotc(&(&quads.q_r * &s)).re;
    let quad_t = st.dotc(&(&quads.q_t * &st)).re;
    let lin_r = s.dotc(&quads.b_r).re;
    let lin_t = st.dotc(&quads.b_t).re;
    quad_r - 2.0 * lin_r + quad_t - 2.0 * lin_t
}

/// Scalar coefficients `(a, c, r, t)` of the per-element objective
/// `a x^2 + r x + c (1 - x^2) + t sqrt(1 - x^2)` for element `m`.
pub fn varsigma_element_coefficients(
    quads: &VarsigmaQuadratics,
    varsigma: &RVec,
    m: usize,
) -> (f64, f64, f64, f64) {
    let count = varsigma.len();
    let a = quads.q_r[(m, m)].re;
    let c = quads.q_t[(m, m)].re;
    let mut r = -quads.b_r[m].re;
    let mut t = -quads.b_t[m].re;
    for n in 0..count {
        if n == m {
            continue;
        }
        r += (quads.q_r[(m, n)] * C64::new(varsigma[n], 0.0)).re;
        t += (quads.q_t[(m, n)]
            * C64::new((1.0 - varsigma[n] * varsigma[n]).max(0.0).sqrt(), 0.0))
        .re;
    }
    (a, c, 2.0 * r, 2.0 * t)
}

/// Per-element objective value.
pub fn varsigma_scalar_objective(a: f64, c: f64, r: f64, t: f64, x: f64) -> f64 {
    a * x * x + r * x + c * (1.0 - x * x) + t * (1.0 - x * x).max(0.0).sqrt()
}

fn varsigma_scalar_derivative(a: f64, c: f64, r: f64, t: f64, x: f64) -> f64 {
    2.0 * (a - c) * x + r - t * x / (1.0 - x * x).max(1e-300).sqrt()
}

/// Exact minimizer of the per-element objective over `[0, 1]`.
///
/// Follows the four endpoint-derivative sign cases; because the derivative
/// can change sign twice (it is the sum of a linear and a convex or concave
/// term), any stationary point found by a scan-and-bisect pass joins the
/// endpoint candidates before the argmin is taken.
pub fn varsigma_scalar_min(a: f64, c: f64, r: f64, t: f64, delta: f64) -> f64 {
    let hi = 1.0 - delta;
    let g0 = varsigma_scalar_derivative(a, c, r, t, 0.0);
    let g1 = varsigma_scalar_derivative(a, c, r, t, hi);

    let mut candidates: Vec<f64> = Vec::with_capacity(8);
    if g0 >= 0.0 && g1 >= 0.0 {
        candidates.push(0.0);
    } else if g0 < 0.0 && g1 <= 0.0 {
        candidates.push(1.0);
    } else if g0 < 0.0 && g1 > 0.0 {
        candidates.push(bisect_derivative(a, c, r, t, 0.0, hi));
    } else {
        // First increasing then decreasing: compare the endpoints.
        candidates.push(0.0);
        candidates.push(1.0);
    }

    // Sign-scan for any further stationary points.
    let segments = 32;
    let mut prev_x = 0.0;
    let mut prev_g = g0;
    for i in 1..=segments {
        let x = hi * i as f64 / segments as f64;
        let g = varsigma_scalar_derivative(a, c, r, t, x);
        if prev_g.signum() != g.signum() && prev_g.is_finite() && g.is_finite() {
            candidates.push(bisect_derivative(a, c, r, t, prev_x, x));
        }
        prev_x = x;
        prev_g = g;
    }
    candidates.push(0.0);
    candidates.push(1.0);

    let mut best = candidates[0];
    let mut best_val = varsigma_scalar_objective(a, c, r, t, best);
    for x in candidates.into_iter().skip(1) {
        let v = varsigma_scalar_objective(a, c, r, t, x);
        if v < best_val {
            best_val = v;
            best = x;
        }
    }
    best
}

fn bisect_derivative(a: f64, c: f64, r: f64, t: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = varsigma_scalar_derivative(a, c, r, t, lo);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let g_mid = varsigma_scalar_derivative(a, c, r, t, mid);
        if g_lo.signum() == g_mid.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Cyclic per-element amplitude design (optimal-power mode only): repeats
/// exact scalar updates until the quadratic objective stops moving.
pub fn update_varsigma(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    aux: &AuxState,
    params: &SumRateParams,
) -> RVec {
    let quads = build_varsigma_quadratics(scn, ris, w, aux);
    let m_count = scn.n_elements();
    let mut varsigma = ris.varsigma.clone();
    let mut obj = varsigma_objective(&quads, &varsigma);
    for _ in 0..params.varsigma_max_sweeps {
        for m in 0..m_count {
            let (a, c, r, t) = varsigma_element_coefficients(&quads, &varsigma, m);
            let candidate = varsigma_scalar_min(a, c, r, t, params.endpoint_delta);
            let old = varsigma[m];
            if varsigma_scalar_objective(a, c, r, t, candidate)
                <= varsigma_scalar_objective(a, c, r, t, old)
            {
                varsigma[m] = candidate;
            }
        }
        let new_obj = varsigma_objective(&quads, &varsigma);
        let delta = (obj - new_obj).abs() / (1.0 + new_obj.abs());
        obj = new_obj;
        if delta < params.varsigma_tol {
            break;
        }
    }
    varsigma
}

/// Initial amplitude coefficients for an operating mode.
pub fn mode_varsigma(mode: Mode, m_count: usize) -> RVec {
    match mode {
        Mode::Op | Mode::Ep => RVec::from_element(m_count, std::f64::consts::FRAC_1_SQRT_2),
        Mode::Sd => RVec::from_fn(m_count, |i, _| if i < m_count.div_ceil(2) { 1.0 } else { 0.0 }),
    }
}

/// Full block-coordinate ascent (outer loop of the sum-rate design).
pub fn run_sum_rate(
    scn: &Scenario,
    params: &SumRateParams,
    mode: Mode,
) -> Result<(RisState, BeamformerSet, SolveTrace)> {
    let started = Instant::now();
    let (mut ris, mut w) = init_state(scn)?;
    ris.varsigma = mode_varsigma(mode, scn.n_elements());

    let mut trace = SolveTrace::new(Problem::Sumrate);
    let mut rate_prev = 0.0f64;
    for iter in 1..=params.max_outer {
        let mut timings = BlockTimings::default();

        let t0 = Instant::now();
        let gamma = update_gamma(scn, &ris, &w);
        let tau = update_tau(scn, &ris, &w, &gamma);
        let aux = AuxState { gamma, tau };
        timings.aux_s = secs(t0.elapsed());

        let t0 = Instant::now();
        w = update_beamformers(scn, &ris, &aux, &w, params)?;
        timings.beamformers_s = secs(t0.elapsed());

        let t0 = Instant::now();
        ris.amp = update_amplification(scn, &ris, &w, &aux, params)?;
        timings.amplification_s = secs(t0.elapsed());

        let t0 = Instant::now();
        let (phi_r, phi_t) = update_phases(scn, &ris, &w, &aux, params)?;
        ris.phi_r = phi_r;
        ris.phi_t = phi_t;
        timings.phases_s = secs(t0.elapsed());

        if mode == Mode::Op {
            let t0 = Instant::now();
            ris.varsigma = update_varsigma(scn, &ris, &w, &aux, params);
            timings.varsigma_s = secs(t0.elapsed());
        }

        let rate = sum_rate(scn, &ris, &w);
        let delta = (rate - rate_prev).abs() / rate.abs().max(1e-300);
        trace.iterations.push(IterationRecord {
            iteration: iter,
            objective: rate,
            surrogate: Some(surrogate(scn, &ris, &w, &aux)),
            power_after_wa: None,
            min_sinr_ratio: None,
            delta,
            timings,
            constraints: check_constraints(scn, &ris, &w, &scn.config.sinr_targets),
        });
        rate_prev = rate;
        if delta < params.outer_tol {
            trace.converged = true;
            break;
        }
    }
    trace.total_seconds = secs(started.elapsed());
    let _ = bs_power(&w);
    Ok((ris, w, trace))
}
