//! Weighted BS+RIS transmit-power minimization under per-user SINR targets.
//!
//! The outer loop alternates two certified convex subproblems (beamformers
//! and amplification gains, both with the SINR constraints in rotated
//! second-order-cone form) with a QoS-balancing redesign of the phases and
//! amplitude coefficients. The balancing objective is the Dinkelbach
//! transform of `max_k f_k / g_k` smoothed by log-sum-exp; it cannot change
//! the power directly, but lifting the worst SINR margin buys slack for the
//! next power-reducing pair. A fallback keeps the previous phases or
//! amplitudes whenever an update would push the worst margin down.

use std::time::Instant;

use crate::convex::{QcqpProblem, QcqpStatus};
use crate::error::{Result, RisError};
use crate::linalg::{cdot, im_inner_row, re_inner_row, C64, CVec, RMat, RVec};
use crate::manifold::{minimize_on_circles, CircleObjective, CirclePoint, ManifoldParams};
use crate::model::{
    check_constraints, equivalent_channel, init_state, mmse_beamformers, ris_noise_power, sinr,
    total_transmit_power, BeamformerSet, RisState, Side,
};
use crate::scenario::{Mode, Scenario};
use crate::sumrate::mode_varsigma;
use crate::trace::{secs, BlockTimings, IterationRecord, Problem, SolveTrace};

/// Tuning knobs of the power-minimization loop.
#[derive(Debug, Clone)]
pub struct PowMinParams {
    /// Weight between BS power and amplified RIS power in the subproblem
    /// objectives, in (0, 1).
    pub alpha: f64,
    /// Log-sum-exp smoothing factor.
    pub smoothing_eps: f64,
    pub max_outer: usize,
    /// Relative total-power change that stops the outer loop.
    pub outer_tol: f64,
    /// Relative change of the Dinkelbach ratio that stops its refresh loop.
    pub dinkelbach_tol: f64,
    pub dinkelbach_max_rounds: usize,
    pub manifold: ManifoldParams,
    /// Coarse bracketing points for each scalar amplitude search.
    pub varsigma_grid: usize,
    pub varsigma_sweeps: usize,
    pub qcqp_tol: f64,
    pub qcqp_max_newton: usize,
    /// Cap on the feasible-start power doublings.
    pub scaleup_cap: usize,
}

impl Default for PowMinParams {
    fn default() -> Self {
        PowMinParams {
            alpha: 0.5,
            smoothing_eps: 1e-3,
            max_outer: 100,
            outer_tol: 1e-4,
            dinkelbach_tol: 1e-6,
            dinkelbach_max_rounds: 20,
            manifold: ManifoldParams { max_iter: 200, ..Default::default() },
            varsigma_grid: 16,
            varsigma_sweeps: 10,
            qcqp_tol: 1e-9,
            qcqp_max_newton: 600,
            scaleup_cap: 30,
        }
    }
}

/// Snapshot of the Dinkelbach state: per-user auxiliary values and the
/// max-ratio on each side and overall.
#[derive(Debug, Clone)]
pub struct QosBalanceState {
    pub varpi_r: f64,
    pub varpi_t: f64,
    pub varpi: f64,
    /// `gamma_k * (interference + noise)`, normalized by the receiver noise.
    pub f: Vec<f64>,
    /// `|h_eq^H w_k|^2`, normalized by the receiver noise.
    pub g: Vec<f64>,
}

/// Evaluate the per-user auxiliary functions and max ratios at a state.
pub fn qos_state(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    targets: &[f64],
) -> QosBalanceState {
    let sigma = scn.config.noise_user;
    let mut f = Vec::with_capacity(scn.n_users());
    let mut g = Vec::with_capacity(scn.n_users());
    let mut varpi_r = 0.0f64;
    let mut varpi_t = 0.0f64;
    for k in 0..scn.n_users() {
        let h_eq = equivalent_channel(scn, ris, k);
        let interference: f64 = (0..scn.n_users())
            .filter(|j| *j != k)
            .map(|j| cdot(&h_eq, &w.w[j]).norm_sqr())
            .sum();
        let fk = targets[k] * (interference + ris_noise_power(scn, ris, k) + sigma) / sigma;
        let gk = cdot(&h_eq, &w.w[k]).norm_sqr() / sigma;
        let ratio = fk / gk.max(1e-300);
        match scn.side(k) {
            Side::Reflect => varpi_r = varpi_r.max(ratio),
            Side::Transmit => varpi_t = varpi_t.max(ratio),
        }
        f.push(fk);
        g.push(gk);
    }
    QosBalanceState { varpi_r, varpi_t, varpi: varpi_r.max(varpi_t), f, g }
}

/// `min_k SINR_k / gamma_k` over users with positive targets.
pub fn min_sinr_ratio(scn: &Scenario, ris: &RisState, w: &BeamformerSet, targets: &[f64]) -> f64 {
    let mut worst = f64::INFINITY;
    for k in 0..scn.n_users() {
        if targets[k] > 0.0 {
            worst = worst.min(sinr(scn, ris, w, k) / targets[k]);
        }
    }
    worst
}

fn stack(w: &BeamformerSet) -> CVec {
    let n = w.w[0].len();
    CVec::from_fn(n * w.w.len(), |i, _| w.w[i / n][i % n])
}

fn unstack(x: &CVec, n: usize, k: usize) -> BeamformerSet {
    BeamformerSet { w: (0..k).map(|j| CVec::from_fn(n, |i, _| x[j * n + i])).collect() }
}

/// Rotate each beamformer so `h_eq,k^H w_k` is real nonnegative (leaves every
/// power and SINR unchanged; aligns with the second-order-cone form).
pub fn rotate_to_real(scn: &Scenario, ris: &RisState, w: &BeamformerSet) -> BeamformerSet {
    let rotated = w
        .w
        .iter()
        .enumerate()
        .map(|(k, wk)| {
            let h_eq = equivalent_channel(scn, ris, k);
            let ip = cdot(&h_eq, wk);
            if ip.norm() < 1e-300 {
                wk.clone()
            } else {
                wk * (ip.conj() / ip.norm())
            }
        })
        .collect();
    BeamformerSet { w: rotated }
}

/// Place a realified per-block complex row into the stacked real layout
/// (`[Re all blocks; Im all blocks]`).
fn place_row(row: &RVec, block: usize, n: usize, k_users: usize) -> RVec {
    let nk = n * k_users;
    let mut out = RVec::zeros(2 * nk);
    for i in 0..n {
        out[block * n + i] = row[i];
        out[nk + block * n + i] = row[n + i];
    }
    out
}

/// Power-minimizing beamformers under SINR targets and per-element supplies.
pub fn update_beamformers_min(
    scn: &Scenario,
    ris: &RisState,
    targets: &[f64],
    params: &PowMinParams,
    warm: Option<&BeamformerSet>,
) -> Result<BeamformerSet> {
    let cfg = &scn.config;
    let n = scn.n_antennas();
    let k_users = scn.n_users();
    let nk = n * k_users;
    let m_count = scn.n_elements();
    let alpha = params.alpha;

    let channels: Vec<CVec> = (0..k_users).map(|k| equivalent_channel(scn, ris, k)).collect();

    // Objective: alpha sum ||w_k||^2 + (1-alpha) sum ||A G w_k||^2.
    let mut obj_block = crate::linalg::CMat::identity(n, n) * C64::new(2.0 * alpha, 0.0);
    for m in 0..m_count {
        if ris.amp[m] == 0.0 {
            continue;
        }
        let g_m = scn.g_row(m);
        obj_block += &g_m * g_m.adjoint() * C64::new(2.0 * (1.0 - alpha) * ris.amp[m], 0.0);
    }
    let mut p_full = crate::linalg::CMat::zeros(nk, nk);
    for kb in 0..k_users {
        p_full.view_mut((kb * n, kb * n), (n, n)).copy_from(&obj_block);
    }

    let mut problem = QcqpProblem::new_complex(nk);
    problem.set_objective_complex(&p_full, &CVec::zeros(nk), 0.0)?;

    // Rotated SINR cone per user with a positive target.
    for k in 0..k_users {
        if targets[k] <= 0.0 {
            continue;
        }
        let sqrt_g = targets[k].sqrt();
        let mut rows: Vec<RVec> = Vec::with_capacity(2 * (k_users - 1));
        let mut offsets: Vec<f64> = Vec::with_capacity(2 * (k_users - 1) + 1);
        for j in 0..k_users {
            if j == k {
                continue;
            }
            rows.push(place_row(&(re_inner_row(&channels[k]) * sqrt_g), j, n, k_users));
            offsets.push(0.0);
            rows.push(place_row(&(im_inner_row(&channels[k]) * sqrt_g), j, n, k_users));
            offsets.push(0.0);
        }
        let noise = ris_noise_power(scn, ris, k) + cfg.noise_user;
        rows.push(RVec::zeros(2 * nk));
        offsets.push(sqrt_g * noise.sqrt());

        let mut fmat = RMat::zeros(rows.len(), 2 * nk);
        for (i, r) in rows.iter().enumerate() {
            fmat.row_mut(i).copy_from(&r.transpose());
        }
        let gvec = RVec::from_vec(offsets);
        let d = place_row(&re_inner_row(&channels[k]), k, n, k_users);
        problem.add_soc(fmat, gvec, d, 0.0)?;
    }

    // Per-element supply (48c).
    for m in 0..m_count {
        if ris.amp[m] <= 0.0 {
            continue;
        }
        let g_m = scn.g_row(m);
        let block = &g_m * g_m.adjoint() * C64::new(2.0 * ris.amp[m], 0.0);
        let mut full = crate::linalg::CMat::zeros(nk, nk);
        for kb in 0..k_users {
            full.view_mut((kb * n, kb * n), (n, n)).copy_from(&block);
        }
        problem.add_quad_complex(
            &full,
            &CVec::zeros(nk),
            cfg.budget_element - ris.amp[m] * cfg.noise_ris,
        )?;
    }

    let var_scale = (cfg.budget_bs / (2.0 * nk as f64)).sqrt();
    problem.set_var_scale(RVec::from_element(2 * nk, var_scale))?;

    let warm_real = warm.map(|w| crate::linalg::realify_vec(&stack(&rotate_to_real(scn, ris, w))));
    let sol = problem.solve_with_start(params.qcqp_tol, params.qcqp_max_newton, warm_real.as_ref())?;
    if sol.status == QcqpStatus::Infeasible {
        let w_probe = warm.cloned().unwrap_or_else(|| BeamformerSet::zeros(n, k_users));
        return Err(RisError::InfeasibleDesign {
            context: "SINR targets unreachable at the current surface configuration".into(),
            report: Box::new(check_constraints(scn, ris, &w_probe, targets)),
        });
    }
    let candidate = unstack(&sol.x_complex(), n, k_users);
    // Keep the incumbent if it is cheaper in the weighted objective (it stays
    // feasible for this subproblem up to the balancing tolerance).
    if let Some(prev) = warm {
        let weighted = |w: &BeamformerSet| {
            let x = crate::linalg::realify_vec(&stack(w));
            0.5 * x.dot(&(crate::linalg::realify_herm(&p_full) * &x))
        };
        if weighted(prev) < weighted(&candidate)
            && min_sinr_ratio(scn, ris, prev, targets) >= 1.0 - 1e-9
        {
            return Ok(prev.clone());
        }
    }
    Ok(candidate)
}

/// Amplified-power minimization over the per-element gains under SINR
/// targets and element supplies (rotated-cone restriction in the real gains).
pub fn update_amplification_min(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    targets: &[f64],
    params: &PowMinParams,
) -> Result<RVec> {
    let cfg = &scn.config;
    let m_count = scn.n_elements();
    let k_users = scn.n_users();
    let alpha = params.alpha;

    if targets.iter().all(|g| *g <= 0.0) {
        return Ok(RVec::zeros(m_count));
    }

    // rho_m = sum_k |g_m^H w_k|^2.
    let rho: Vec<f64> = (0..m_count)
        .map(|m| {
            let g_m = scn.g_row(m);
            w.w.iter().map(|wk| cdot(&g_m, wk).norm_sqr()).sum::<f64>()
        })
        .collect();

    let mut problem = QcqpProblem::new_real(m_count);
    let p = RMat::from_fn(m_count, m_count, |i, j| {
        if i == j {
            2.0 * (1.0 - alpha) * rho[i]
        } else {
            0.0
        }
    });
    problem.set_objective_real(p, RVec::zeros(m_count), 0.0)?;

    // SINR cones in the gain space: affine maps s -> h_eq,k(s)^H w_j.
    for k in 0..k_users {
        if targets[k] <= 0.0 {
            continue;
        }
        let side = scn.side(k);
        let phi = ris.phi(side);
        let sqrt_g = targets[k].sqrt();
        let mut rows: Vec<RVec> = Vec::new();
        let mut offsets: Vec<f64> = Vec::new();
        let mut d_rhs = RVec::zeros(m_count);
        let mut e_rhs = 0.0;
        for j in 0..k_users {
            let gw = &scn.g * &w.w[j];
            let dkj = cdot(&scn.h_d[k], &w.w[j]);
            let coef = CVec::from_fn(m_count, |i, _| {
                scn.h_r[k][i].conj() * phi[i] * gw[i] * C64::new(ris.e(i, side), 0.0)
            });
            if j == k {
                d_rhs = RVec::from_fn(m_count, |i, _| coef[i].re);
                e_rhs = dkj.re;
            } else {
                rows.push(RVec::from_fn(m_count, |i, _| sqrt_g * coef[i].re));
                offsets.push(sqrt_g * dkj.re);
                rows.push(RVec::from_fn(m_count, |i, _| sqrt_g * coef[i].im));
                offsets.push(sqrt_g * dkj.im);
            }
        }
        // Forwarded RIS noise rows: sqrt(gamma sigma_v^2) e_m |h_r,k,m| s_m.
        for i in 0..m_count {
            let mut row = RVec::zeros(m_count);
            row[i] = sqrt_g * cfg.noise_ris.sqrt() * ris.e(i, side) * scn.h_r[k][i].norm();
            rows.push(row);
            offsets.push(0.0);
        }
        rows.push(RVec::zeros(m_count));
        offsets.push(sqrt_g * cfg.noise_user.sqrt());

        let mut fmat = RMat::zeros(rows.len(), m_count);
        for (i, r) in rows.iter().enumerate() {
            fmat.row_mut(i).copy_from(&r.transpose());
        }
        problem.add_soc(fmat, RVec::from_vec(offsets), d_rhs, e_rhs)?;
    }

    // Element supply and sign.
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
    if sol.status == QcqpStatus::Infeasible {
        return Err(RisError::InfeasibleDesign {
            context: "SINR targets unreachable over the amplification gains".into(),
            report: Box::new(check_constraints(scn, ris, w, targets)),
        });
    }
    let s = sol.x_real();
    let amp = RVec::from_fn(m_count, |i, _| (s[i].max(0.0)).powi(2));

    // Keep the incumbent when it is cheaper (monotone amplified power).
    let amplified = |a: &RVec| -> f64 { (0..m_count).map(|m| a[m] * rho[m]).sum() };
    if amplified(&ris.amp) < amplified(&amp)
        && min_sinr_ratio(scn, ris, w, targets) >= 1.0 - 1e-9
    {
        return Ok(ris.amp.clone());
    }
    Ok(amp)
}

/// Log-sum-exp smoothed Dinkelbach objective for one side's phase vector.
///
/// All `f_k`, `g_k` are normalized by the receiver noise power so the values
/// sit at order one regardless of the absolute channel scale; ratios and the
/// smoothing sandwich are unaffected.
pub struct LsePhaseObjective {
    /// Per user in the side set: `r_{k,j}` columns and `h_d,k^H w_j` values.
    terms: Vec<PhaseUserTerm>,
    pub varpi: f64,
    pub eps: f64,
}

struct PhaseUserTerm {
    target: f64,
    /// `r_{k,j}` for every j (self index marked).
    r: Vec<CVec>,
    d: Vec<C64>,
    self_idx: usize,
    /// Phase-independent part of f_k: noise terms times the target, noise-normalized.
    noise_term: f64,
    /// 1 / sigma_k^2.
    inv_sigma: f64,
}

impl LsePhaseObjective {
    /// Build the objective for `side` at fixed `w`, gains and amplitudes.
    pub fn new(
        scn: &Scenario,
        ris: &RisState,
        w: &BeamformerSet,
        targets: &[f64],
        side: Side,
        varpi: f64,
        eps: f64,
    ) -> Self {
        let users: Vec<usize> = match side {
            Side::Reflect => scn.set_r.clone(),
            Side::Transmit => scn.set_t.clone(),
        };
        let sigma = scn.config.noise_user;
        let terms = users
            .iter()
            .map(|&k| {
                let r: Vec<CVec> = (0..scn.n_users())
                    .map(|j| {
                        let gw = &scn.g * &w.w[j];
                        CVec::from_fn(scn.n_elements(), |i, _| {
                            scn.h_r[k][i]
                                * gw[i].conj()
                                * C64::new(ris.e(i, side) * ris.amp[i].sqrt(), 0.0)
                        })
                    })
                    .collect();
                let d: Vec<C64> = (0..scn.n_users()).map(|j| cdot(&scn.h_d[k], &w.w[j])).collect();
                PhaseUserTerm {
                    target: targets[k],
                    r,
                    d,
                    self_idx: k,
                    noise_term: targets[k] * (ris_noise_power(scn, ris, k) + sigma) / sigma,
                    inv_sigma: 1.0 / sigma,
                }
            })
            .collect();
        LsePhaseObjective { terms, varpi, eps }
    }

    /// `f_k(phi)` and `g_k(phi)` for every user of the side.
    pub fn components(&self, phi: &CVec) -> Vec<(f64, f64)> {
        self.terms
            .iter()
            .map(|t| {
                let mut interference = 0.0;
                let mut signal = 0.0;
                for j in 0..t.r.len() {
                    let v = t.d[j] + cdot(&t.r[j], phi);
                    if j == t.self_idx {
                        signal = v.norm_sqr() * t.inv_sigma;
                    } else {
                        interference += v.norm_sqr() * t.inv_sigma;
                    }
                }
                (t.target * interference + t.noise_term, signal)
            })
            .collect()
    }

    fn exponents(&self, phi: &CVec) -> Vec<f64> {
        self.components(phi).iter().map(|(f, g)| f - self.varpi * g).collect()
    }
}

impl CircleObjective for LsePhaseObjective {
    fn value(&self, phi: &CVec) -> f64 {
        let xs = self.exponents(phi);
        let m = xs.iter().fold(f64::NEG_INFINITY, |a, x| a.max(*x));
        let sum: f64 = xs.iter().map(|x| ((x - m) / self.eps).exp()).sum();
        m + self.eps * sum.ln()
    }

    fn gradient(&self, phi: &CVec) -> CVec {
        let xs = self.exponents(phi);
        let m = xs.iter().fold(f64::NEG_INFINITY, |a, x| a.max(*x));
        let weights: Vec<f64> = xs.iter().map(|x| ((x - m) / self.eps).exp()).collect();
        let total: f64 = weights.iter().sum();
        let dim = phi.len();
        let mut grad = CVec::zeros(dim);
        for (t, wgt) in self.terms.iter().zip(&weights) {
            let softmax = wgt / total;
            // grad f_k - varpi grad g_k, with grad |d + r^H phi|^2 = 2 r (r^H phi + d).
            for j in 0..t.r.len() {
                let v = t.d[j] + cdot(&t.r[j], phi);
                let scale = if j == t.self_idx {
                    -self.varpi * 2.0 * t.inv_sigma
                } else {
                    t.target * 2.0 * t.inv_sigma
                };
                grad += &t.r[j] * (v * C64::new(softmax * scale, 0.0));
            }
        }
        grad
    }
}

/// QoS-balancing phase redesign for both sides with the keep-previous
/// fallback on the worst SINR margin.
pub fn qos_balance_phases(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    targets: &[f64],
    params: &PowMinParams,
) -> Result<(CVec, CVec)> {
    let mut out_r = ris.phi_r.clone();
    let mut out_t = ris.phi_t.clone();
    for side in [Side::Reflect, Side::Transmit] {
        let users: &[usize] = match side {
            Side::Reflect => &scn.set_r,
            Side::Transmit => &scn.set_t,
        };
        if users.is_empty() || users.iter().all(|k| targets[*k] <= 0.0) {
            continue;
        }

        let side_ratio = |state: &RisState| -> f64 {
            users
                .iter()
                .filter(|k| targets[**k] > 0.0)
                .map(|k| sinr(scn, state, w, *k) / targets[*k])
                .fold(f64::INFINITY, f64::min)
        };
        let before = side_ratio(ris);

        let mut phi = match side {
            Side::Reflect => ris.phi_r.clone(),
            Side::Transmit => ris.phi_t.clone(),
        };
        let mut trial = ris.clone();
        let mut varpi = {
            let q = qos_state(scn, ris, w, targets);
            match side {
                Side::Reflect => q.varpi_r,
                Side::Transmit => q.varpi_t,
            }
        };
        for _ in 0..params.dinkelbach_max_rounds {
            let objective =
                LsePhaseObjective::new(scn, &trial, w, targets, side, varpi, params.smoothing_eps);
            let start = CirclePoint::new(phi.clone())?;
            let (opt, _) = minimize_on_circles(&objective, &start, &params.manifold)?;
            phi = opt.phi;
            match side {
                Side::Reflect => trial.phi_r = phi.clone(),
                Side::Transmit => trial.phi_t = phi.clone(),
            }
            let q = qos_state(scn, &trial, w, targets);
            let new_varpi = match side {
                Side::Reflect => q.varpi_r,
                Side::Transmit => q.varpi_t,
            };
            let delta = (new_varpi - varpi).abs() / new_varpi.abs().max(1e-300);
            varpi = new_varpi;
            if delta < params.dinkelbach_tol {
                break;
            }
        }

        // Fallback: never let the side's worst margin regress.
        if side_ratio(&trial) >= before - 1e-6 {
            match side {
                Side::Reflect => out_r = phi,
                Side::Transmit => out_t = phi,
            }
        }
    }
    Ok((out_r, out_t))
}

/// Generic scalar minimization on `[0, 1]`: coarse bracketing grid plus
/// golden-section refinement to a 1e-6 interval.
pub fn min_scalar_on_unit_interval(f: impl Fn(f64) -> f64, grid: usize) -> f64 {
    let n = grid.max(4);
    let mut best_i = 0usize;
    let mut best_v = f64::INFINITY;
    for i in 0..=n {
        let x = i as f64 / n as f64;
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut lo = if best_i == 0 { 0.0 } else { (best_i - 1) as f64 / n as f64 };
    let mut hi = if best_i == n { 1.0 } else { (best_i + 1) as f64 / n as f64 };
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut m1 = hi - ratio * (hi - lo);
    let mut m2 = lo + ratio * (hi - lo);
    let mut f1 = f(m1);
    let mut f2 = f(m2);
    while hi - lo > 1e-6 {
        if f1 < f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - ratio * (hi - lo);
            f1 = f(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + ratio * (hi - lo);
            f2 = f(m2);
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid) < best_v {
        mid
    } else {
        best_i as f64 / n as f64
    }
}

/// Per-element evaluation state for the amplitude balancing objective.
pub struct VarsigmaBalanceObjective {
    /// For each user: complex coefficient of element `m` in `h_eq^H w_j`
    /// per unit amplitude, current values `v_{k,j}`, and noise bookkeeping.
    users: Vec<VsUser>,
    pub varpi: f64,
    pub eps: f64,
}

struct VsUser {
    side: Side,
    target: f64,
    /// coef[j][m]: contribution of element m at unit amplitude coefficient.
    coef: Vec<CVec>,
    /// Current v_{k,j} = d + sum_m coef e_m.
    v: Vec<C64>,
    self_idx: usize,
    /// Noise factor per element: sigma_v^2 |h_r,k,m|^2 a_m (noise-normalized).
    noise_coef: RVec,
    /// Current noise sum including the receiver noise (normalized).
    noise_sum: f64,
    inv_sigma: f64,
}

impl VarsigmaBalanceObjective {
    pub fn new(
        scn: &Scenario,
        ris: &RisState,
        w: &BeamformerSet,
        targets: &[f64],
        varpi: f64,
        eps: f64,
    ) -> Self {
        let sigma = scn.config.noise_user;
        let users = (0..scn.n_users())
            .map(|k| {
                let side = scn.side(k);
                let phi = ris.phi(side);
                let coef: Vec<CVec> = (0..scn.n_users())
                    .map(|j| {
                        let gw = &scn.g * &w.w[j];
                        CVec::from_fn(scn.n_elements(), |i, _| {
                            scn.h_r[k][i].conj() * phi[i] * gw[i] * C64::new(ris.amp[i].sqrt(), 0.0)
                        })
                    })
                    .collect();
                let v: Vec<C64> = (0..scn.n_users())
                    .map(|j| {
                        let mut acc = cdot(&scn.h_d[k], &w.w[j]);
                        for i in 0..scn.n_elements() {
                            acc += coef[j][i] * ris.e(i, side);
                        }
                        acc
                    })
                    .collect();
                let noise_coef = RVec::from_fn(scn.n_elements(), |i, _| {
                    scn.config.noise_ris * scn.h_r[k][i].norm_sqr() * ris.amp[i] / sigma
                });
                let noise_sum = (0..scn.n_elements())
                    .map(|i| {
                        let e = ris.e(i, side);
                        noise_coef[i] * e * e
                    })
                    .sum::<f64>()
                    + 1.0;
                VsUser {
                    side,
                    target: targets[k],
                    coef,
                    v,
                    self_idx: k,
                    noise_coef,
                    noise_sum,
                    inv_sigma: 1.0 / sigma,
                }
            })
            .collect();
        VarsigmaBalanceObjective { users, varpi, eps }
    }

    fn amplitude(side: Side, x: f64) -> f64 {
        match side {
            Side::Reflect => x,
            Side::Transmit => (1.0 - x * x).max(0.0).sqrt(),
        }
    }

    /// Smoothed objective when element `m` moves from `old` to `x`.
    pub fn value_with_element(&self, varsigma: &RVec, m: usize, x: f64) -> f64 {
        let mut exponents = Vec::with_capacity(self.users.len());
        for u in &self.users {
            let e_old = Self::amplitude(u.side, varsigma[m]);
            let e_new = Self::amplitude(u.side, x);
            let de = e_new - e_old;
            let mut interference = 0.0;
            let mut signal = 0.0;
            for j in 0..u.v.len() {
                let v = u.v[j] + u.coef[j][m] * de;
                if j == u.self_idx {
                    signal = v.norm_sqr() * u.inv_sigma;
                } else {
                    interference += v.norm_sqr() * u.inv_sigma;
                }
            }
            let noise = u.noise_sum + u.noise_coef[m] * (e_new * e_new - e_old * e_old);
            let f = u.target * (interference + noise);
            exponents.push(f - self.varpi * signal);
        }
        let mx = exponents.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
        let sum: f64 = exponents.iter().map(|v| ((v - mx) / self.eps).exp()).sum();
        mx + self.eps * sum.ln()
    }

    /// Commit element `m` to the new value, updating the cached terms.
    pub fn commit_element(&mut self, varsigma: &mut RVec, m: usize, x: f64) {
        for u in &mut self.users {
            let e_old = Self::amplitude(u.side, varsigma[m]);
            let e_new = Self::amplitude(u.side, x);
            let de = e_new - e_old;
            for j in 0..u.v.len() {
                u.v[j] += u.coef[j][m] * de;
            }
            u.noise_sum += u.noise_coef[m] * (e_new * e_new - e_old * e_old);
        }
        varsigma[m] = x;
    }
}

/// Cyclic per-element amplitude redesign under the smoothed QoS-balancing
/// objective, with the keep-previous fallback on the worst margin.
pub fn update_varsigma_min(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    targets: &[f64],
    params: &PowMinParams,
) -> RVec {
    if targets.iter().all(|g| *g <= 0.0) {
        return ris.varsigma.clone();
    }
    let before = min_sinr_ratio(scn, ris, w, targets);
    let mut varsigma = ris.varsigma.clone();
    let m_count = scn.n_elements();

    for _ in 0..params.varsigma_sweeps {
        let varpi = {
            let mut trial = ris.clone();
            trial.varsigma = varsigma.clone();
            qos_state(scn, &trial, w, targets).varpi
        };
        let mut trial = ris.clone();
        trial.varsigma = varsigma.clone();
        let mut obj =
            VarsigmaBalanceObjective::new(scn, &trial, w, targets, varpi, params.smoothing_eps);
        let mut moved = 0.0f64;
        for m in 0..m_count {
            let current = varsigma[m];
            let best = min_scalar_on_unit_interval(
                |x| obj.value_with_element(&varsigma, m, x),
                params.varsigma_grid,
            );
            // Never worsen the smoothed objective for this element.
            if obj.value_with_element(&varsigma, m, best)
                <= obj.value_with_element(&varsigma, m, current) + 1e-15
            {
                obj.commit_element(&mut varsigma, m, best);
                moved = moved.max((best - current).abs());
            }
        }
        if moved < 1e-7 {
            break;
        }
    }

    let mut trial = ris.clone();
    trial.varsigma = varsigma.clone();
    if min_sinr_ratio(scn, &trial, w, targets) >= before - 1e-6 {
        varsigma
    } else {
        ris.varsigma.clone()
    }
}

/// Numerical-rank report of the stacked equivalent channel `G^H H_r + H_d`.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub full_rank: bool,
    pub rank: usize,
    pub required: usize,
    pub singular_values: Vec<f64>,
}

/// Sufficient-condition check: with a full-rank stacked channel, finite SINR
/// targets are always reachable.
pub fn feasibility_precheck(scn: &Scenario) -> RankReport {
    let n = scn.n_antennas();
    let k = scn.n_users();
    let mut stacked = crate::linalg::CMat::zeros(n, k);
    for j in 0..k {
        let col = scn.g.ad_mul(&scn.h_r[j]) + &scn.h_d[j];
        stacked.column_mut(j).copy_from(&col);
    }
    let svd = stacked.svd(false, false);
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = singular_values.iter().fold(0.0f64, |a, s| a.max(*s));
    let rank = singular_values.iter().filter(|s| **s > 1e-10 * smax).count();
    let required = n.min(k);
    RankReport { full_rank: rank == required, rank, required, singular_values }
}

/// Feasible-start search: double the transmit-power surrogate (re-fitting
/// MMSE directions) until every SINR target is met at the initial phases.
fn feasible_start(
    scn: &Scenario,
    ris: &RisState,
    targets: &[f64],
    params: &PowMinParams,
) -> Result<BeamformerSet> {
    let mut p_surrogate = scn.config.budget_bs;
    for _ in 0..=params.scaleup_cap {
        let w = mmse_beamformers(scn, ris, p_surrogate)?;
        if min_sinr_ratio(scn, ris, &w, targets) >= 1.0 {
            return Ok(rotate_to_real(scn, ris, &w));
        }
        p_surrogate *= 2.0;
    }
    let w = mmse_beamformers(scn, ris, p_surrogate)?;
    Err(RisError::InfeasibleDesign {
        context: format!(
            "no feasible start after {} power doublings (final surrogate {:.3e} W)",
            params.scaleup_cap, p_surrogate
        ),
        report: Box::new(check_constraints(scn, ris, &w, targets)),
    })
}

/// Full alternating loop of the power-minimization design. The operating
/// mode comes from the scenario config (amplitudes are only optimized in
/// optimal-power mode).
pub fn run_power_min(
    scn: &Scenario,
    targets: &[f64],
    params: &PowMinParams,
) -> Result<(RisState, BeamformerSet, SolveTrace)> {
    let started = Instant::now();
    if targets.len() != scn.n_users() {
        return Err(RisError::Dimension("one SINR target per user required".into()));
    }
    let mode = scn.config.mode;
    let mut trace = SolveTrace::new(Problem::Powmin);

    // Zero targets: the optimum is no transmission at all.
    if targets.iter().all(|g| *g <= 0.0) {
        let (mut ris, _) = init_state(scn)?;
        ris.varsigma = mode_varsigma(mode, scn.n_elements());
        ris.amp = RVec::zeros(scn.n_elements());
        let w = BeamformerSet::zeros(scn.n_antennas(), scn.n_users());
        trace.iterations.push(IterationRecord {
            iteration: 1,
            objective: 0.0,
            surrogate: None,
            power_after_wa: Some(0.0),
            min_sinr_ratio: None,
            delta: 0.0,
            timings: BlockTimings::default(),
            constraints: check_constraints(scn, &ris, &w, targets),
        });
        trace.converged = true;
        trace.total_seconds = secs(started.elapsed());
        return Ok((ris, w, trace));
    }

    let rank = feasibility_precheck(scn);
    if !rank.full_rank {
        let (ris, w) = init_state(scn)?;
        return Err(RisError::InfeasibleDesign {
            context: format!(
                "stacked channel rank {} < {}; the finite-target feasibility condition fails",
                rank.rank, rank.required
            ),
            report: Box::new(check_constraints(scn, &ris, &w, targets)),
        });
    }

    let (mut ris, _) = init_state(scn)?;
    ris.varsigma = mode_varsigma(mode, scn.n_elements());
    let mut w = feasible_start(scn, &ris, targets, params)?;

    let mut p_prev = f64::INFINITY;
    for iter in 1..=params.max_outer {
        let mut timings = BlockTimings::default();

        let t0 = Instant::now();
        w = update_beamformers_min(scn, &ris, targets, params, Some(&w))?;
        timings.beamformers_s = secs(t0.elapsed());

        let t0 = Instant::now();
        ris.amp = update_amplification_min(scn, &ris, &w, targets, params)?;
        timings.amplification_s = secs(t0.elapsed());
        let power_after_wa = total_transmit_power(scn, &ris, &w);

        let t0 = Instant::now();
        let (phi_r, phi_t) = qos_balance_phases(scn, &ris, &w, targets, params)?;
        ris.phi_r = phi_r;
        ris.phi_t = phi_t;
        timings.phases_s = secs(t0.elapsed());

        if mode == Mode::Op {
            let t0 = Instant::now();
            ris.varsigma = update_varsigma_min(scn, &ris, &w, targets, params);
            timings.varsigma_s = secs(t0.elapsed());
        }

        let p = total_transmit_power(scn, &ris, &w);
        let delta = (p - p_prev).abs() / p.abs().max(1e-300);
        trace.iterations.push(IterationRecord {
            iteration: iter,
            objective: p,
            surrogate: None,
            power_after_wa: Some(power_after_wa),
            min_sinr_ratio: Some(min_sinr_ratio(scn, &ris, &w, targets)),
            delta,
            timings,
            constraints: check_constraints(scn, &ris, &w, targets),
        });
        p_prev = p;
        if delta < params.outer_tol {
            trace.converged = true;
            break;
        }
    }
    trace.total_seconds = secs(started.elapsed());
    Ok((ris, w, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, db_to_linear, ScenarioConfig};

    fn desk(seed: u64) -> Scenario {
        build_scenario(&ScenarioConfig::desk().with_seed(seed)).unwrap()
    }

    #[test]
    fn precheck_full_rank_generic_and_degenerate() {
        let scn = desk(1);
        let rep = feasibility_precheck(&scn);
        assert!(rep.full_rank, "continuous fading is full rank almost surely");
        assert_eq!(rep.required, 2);

        let mut degenerate = scn.clone();
        degenerate.h_d[1] = degenerate.h_d[0].clone();
        degenerate.h_r[1] = degenerate.h_r[0].clone();
        let rep2 = feasibility_precheck(&degenerate);
        assert!(!rep2.full_rank);
        assert_eq!(rep2.rank, 1);
    }

    #[test]
    fn precheck_single_user() {
        let mut cfg = ScenarioConfig::desk();
        cfg.n_users = 1;
        cfg.n_users_reflect = 1;
        cfg.sinr_targets = vec![1.0];
        let scn = build_scenario(&cfg).unwrap();
        let rep = feasibility_precheck(&scn);
        assert_eq!(rep.required, 1);
        assert_eq!(rep.rank, 1);
        assert!(rep.full_rank);
    }

    #[test]
    fn single_user_matched_filter_closed_form() {
        // K=1, a=0: minimum-power beamformer is the matched filter with
        // ||w||^2 = gamma sigma^2 / ||h_d||^2.
        let mut cfg = ScenarioConfig::desk();
        cfg.n_users = 1;
        cfg.n_users_reflect = 1;
        let gamma = db_to_linear(10.0);
        cfg.sinr_targets = vec![gamma];
        let scn = build_scenario(&cfg).unwrap();
        let (mut ris, _) = init_state(&scn).unwrap();
        ris.amp = RVec::zeros(scn.n_elements());
        let params = PowMinParams::default();
        let w = update_beamformers_min(&scn, &ris, &[gamma], &params, None).unwrap();
        let hn2: f64 = scn.h_d[0].iter().map(|z| z.norm_sqr()).sum();
        let expected = gamma * scn.config.noise_user / hn2;
        let got = crate::model::bs_power(&w);
        assert!(
            (got - expected).abs() < 1e-6 * expected,
            "power {got:.6e} vs matched filter {expected:.6e}"
        );
        // Direction check: w parallel to h_d.
        let ip = cdot(&scn.h_d[0], &w.w[0]).norm_sqr();
        assert!((ip - hn2 * got).abs() < 1e-6 * hn2 * got);
    }

    #[test]
    fn beamformer_targets_zero_gives_zero() {
        let scn = desk(2);
        let (ris, _) = init_state(&scn).unwrap();
        let params = PowMinParams::default();
        let w = update_beamformers_min(&scn, &ris, &[0.0, 0.0], &params, None).unwrap();
        assert!(crate::model::bs_power(&w) < 1e-12);
    }

    #[test]
    fn beamformer_constraints_active_at_optimum() {
        // Spot check on a few seeds: SINR constraints bind at the optimum.
        for seed in [3u64, 4, 5] {
            let scn = desk(seed);
            let targets = scn.config.sinr_targets.clone();
            let (ris, _) = init_state(&scn).unwrap();
            let params = PowMinParams::default();
            let w0 = feasible_start(&scn, &ris, &targets, &params).unwrap();
            let w = update_beamformers_min(&scn, &ris, &targets, &params, Some(&w0)).unwrap();
            for k in 0..scn.n_users() {
                let s = sinr(&scn, &ris, &w, k);
                assert!(
                    s >= targets[k] * (1.0 - 1e-6),
                    "seed {seed} user {k}: SINR {s} below target {}",
                    targets[k]
                );
                assert!(
                    s <= targets[k] * (1.0 + 1e-4),
                    "seed {seed} user {k}: SINR {s:.6e} loose against {:.6e}",
                    targets[k]
                );
            }
        }
    }

    #[test]
    fn amplification_min_monotone_and_feasible() {
        let scn = desk(6);
        let targets = scn.config.sinr_targets.clone();
        let (ris, _) = init_state(&scn).unwrap();
        let params = PowMinParams::default();
        let w0 = feasible_start(&scn, &ris, &targets, &params).unwrap();
        let w = update_beamformers_min(&scn, &ris, &targets, &params, Some(&w0)).unwrap();
        let amplified = |a: &RVec| -> f64 {
            (0..scn.n_elements())
                .map(|m| {
                    let g_m = scn.g_row(m);
                    a[m] * w.w.iter().map(|wk| cdot(&g_m, wk).norm_sqr()).sum::<f64>()
                })
                .sum()
        };
        let before = amplified(&ris.amp);
        let amp = update_amplification_min(&scn, &ris, &w, &targets, &params).unwrap();
        assert!(amplified(&amp) <= before + 1e-9 * before.max(1.0));
        let mut ris2 = ris.clone();
        ris2.amp = amp;
        assert!(min_sinr_ratio(&scn, &ris2, &w, &targets) >= 1.0 - 1e-6);
    }

    #[test]
    fn amplification_min_zero_targets() {
        let scn = desk(7);
        let (ris, w) = init_state(&scn).unwrap();
        let params = PowMinParams::default();
        let amp = update_amplification_min(&scn, &ris, &w, &[0.0, 0.0], &params).unwrap();
        assert!(amp.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn amplification_min_boundary_activity() {
        // Single user, single element, target pinned a hair below the SINR
        // achievable at the cap: only the cap satisfies it.
        let mut cfg = ScenarioConfig::desk();
        cfg.n_users = 1;
        cfg.n_users_reflect = 1;
        cfg.n_elements = 1;
        cfg.budget_element = 2.0 * cfg.budget_ris;
        cfg.sinr_targets = vec![1.0];
        let scn = build_scenario(&cfg).unwrap();
        let (mut ris, mut w) = init_state(&scn).unwrap();

        let g0 = scn.g_row(0);
        let rho: f64 = w.w.iter().map(|wk| cdot(&g0, wk).norm_sqr()).sum();
        let cap = cfg.budget_element / (rho + cfg.noise_ris);
        ris.amp = RVec::from_element(1, cap);
        // Rotate so the rotated-cone restriction is tight against |.|.
        w = rotate_to_real(&scn, &ris, &w);
        let achievable = sinr(&scn, &ris, &w, 0);
        let target = achievable * (1.0 - 1e-9);

        let params = PowMinParams::default();
        let amp = update_amplification_min(&scn, &ris, &w, &[target], &params).unwrap();
        assert!(
            (amp[0] - cap).abs() <= 1e-6 * cap,
            "gain {} should sit on the cap {cap}",
            amp[0]
        );
    }

    #[test]
    fn varsigma_min_prefers_reflection_when_transmit_side_empty() {
        let mut cfg = ScenarioConfig::desk();
        cfg.n_users_reflect = cfg.n_users; // transmit side unused
        let scn = build_scenario(&cfg).unwrap();
        let targets = scn.config.sinr_targets.clone();
        let (ris, _) = init_state(&scn).unwrap();
        let params = PowMinParams::default();
        let w = feasible_start(&scn, &ris, &targets, &params).unwrap();
        let before = min_sinr_ratio(&scn, &ris, &w, &targets);
        let vs = update_varsigma_min(&scn, &ris, &w, &targets, &params);
        let mut ris2 = ris.clone();
        ris2.varsigma = vs;
        let after = min_sinr_ratio(&scn, &ris2, &w, &targets);
        assert!(after >= before - 1e-6, "reflect-side margin regressed: {before} -> {after}");
        assert!(ris2.varsigma.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn qos_balance_two_phase_grid_toy() {
        // M = 2 with both users on the reflect side: compare the balanced
        // min SINR ratio against an exhaustive 1e-3-radian phase grid.
        let mut cfg = ScenarioConfig::desk();
        cfg.n_elements = 2;
        cfg.budget_element = cfg.budget_ris;
        cfg.n_users_reflect = 2; // both users on the reflect side
        let scn = build_scenario(&cfg).unwrap();
        let targets = scn.config.sinr_targets.clone();
        let (ris, _) = init_state(&scn).unwrap();
        let params = PowMinParams::default();
        let w = feasible_start(&scn, &ris, &targets, &params).unwrap();

        let ratio_at = |phi: &CVec| {
            let mut trial = ris.clone();
            trial.phi_r = phi.clone();
            min_sinr_ratio(&scn, &trial, &w, &targets)
        };
        let n_grid = (std::f64::consts::TAU / 1e-3).ceil() as usize;
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..n_grid {
            let t1 = std::f64::consts::TAU * i as f64 / n_grid as f64;
            for j in 0..n_grid {
                let t2 = std::f64::consts::TAU * j as f64 / n_grid as f64;
                let phi = CVec::from_vec(vec![
                    C64::new(t1.cos(), t1.sin()),
                    C64::new(t2.cos(), t2.sin()),
                ]);
                grid_best = grid_best.max(ratio_at(&phi));
            }
        }

        // A few balancing rounds from the warm phases.
        let mut trial = ris.clone();
        for _ in 0..5 {
            let (phi_r, phi_t) = qos_balance_phases(&scn, &trial, &w, &targets, &params).unwrap();
            trial.phi_r = phi_r;
            trial.phi_t = phi_t;
        }
        let achieved = min_sinr_ratio(&scn, &trial, &w, &targets);
        assert!(
            achieved >= grid_best * (1.0 - 1e-2),
            "balanced ratio {achieved:.6} vs grid optimum {grid_best:.6}"
        );
    }

    #[test]
    fn lse_phase_gradient_matches_finite_differences() {
        let mut cfg = ScenarioConfig::desk();
        cfg.n_elements = 4;
        cfg.budget_element = 2.0 * cfg.budget_ris / 4.0;
        let scn = build_scenario(&cfg).unwrap();
        let targets = scn.config.sinr_targets.clone();
        let (ris, w) = crate::model::tests::random_state(&scn, 8);
        let q = qos_state(&scn, &ris, &w, &targets);
        let obj =
            LsePhaseObjective::new(&scn, &ris, &w, &targets, Side::Reflect, q.varpi_r, 1e-3);
        let phi = ris.phi_r.clone();
        let grad = obj.gradient(&phi);
        let scale = grad.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1e-12);
        for i in 0..phi.len() {
            for reim in 0..2 {
                let h = 1e-6;
                let delta = if reim == 0 { C64::new(h, 0.0) } else { C64::new(0.0, h) };
                let mut plus = phi.clone();
                let mut minus = phi.clone();
                plus[i] += delta;
                minus[i] -= delta;
                let fd = (obj.value(&plus) - obj.value(&minus)) / (2.0 * h);
                let analytic = if reim == 0 { grad[i].re } else { grad[i].im };
                assert!(
                    (fd - analytic).abs() <= 1e-5 * scale,
                    "entry {i}/{reim}: fd {fd:.6e} vs analytic {analytic:.6e}"
                );
            }
        }
    }

    #[test]
    fn lse_sandwich_bound() {
        let scn = desk(9);
        let targets = scn.config.sinr_targets.clone();
        let (ris, w) = crate::model::tests::random_state(&scn, 10);
        let q = qos_state(&scn, &ris, &w, &targets);
        let eps = 1e-3;
        let obj = LsePhaseObjective::new(&scn, &ris, &w, &targets, Side::Reflect, q.varpi_r, eps);
        let mut rng = crate::scenario::stream_rng(11, 1);
        use rand::Rng;
        for _ in 0..20 {
            let phi = CVec::from_fn(scn.n_elements(), |_, _| {
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                C64::new(t.cos(), t.sin())
            });
            let comps = obj.components(&phi);
            let true_max = comps
                .iter()
                .map(|(f, g)| f - q.varpi_r * g)
                .fold(f64::NEG_INFINITY, f64::max);
            let smoothed = obj.value(&phi);
            let bound = eps * (comps.len() as f64).ln();
            assert!(smoothed >= true_max - 1e-12);
            assert!(smoothed <= true_max + bound + 1e-12);
        }
    }

    #[test]
    fn phase_balance_single_user_never_regresses() {
        let mut cfg = ScenarioConfig::desk();
        cfg.n_users = 1;
        cfg.n_users_reflect = 1;
        cfg.sinr_targets = vec![db_to_linear(10.0)];
        let scn = build_scenario(&cfg).unwrap();
        let targets = scn.config.sinr_targets.clone();
        let (ris, _) = init_state(&scn).unwrap();
        let params = PowMinParams::default();
        let w = feasible_start(&scn, &ris, &targets, &params).unwrap();
        let before = sinr(&scn, &ris, &w, 0);
        let (phi_r, phi_t) = qos_balance_phases(&scn, &ris, &w, &targets, &params).unwrap();
        let mut ris2 = ris.clone();
        ris2.phi_r = phi_r;
        ris2.phi_t = phi_t;
        assert!(sinr(&scn, &ris2, &w, 0) >= before * (1.0 - 1e-9));
    }

    #[test]
    fn phase_balance_fallback_preserves_margin() {
        let scn = desk(12);
        let targets = scn.config.sinr_targets.clone();
        let (ris, _) = init_state(&scn).unwrap();
        let params = PowMinParams::default();
        let w = feasible_start(&scn, &ris, &targets, &params).unwrap();
        let before = min_sinr_ratio(&scn, &ris, &w, &targets);
        let (phi_r, phi_t) = qos_balance_phases(&scn, &ris, &w, &targets, &params).unwrap();
        let mut ris2 = ris.clone();
        ris2.phi_r = phi_r;
        ris2.phi_t = phi_t;
        assert!(min_sinr_ratio(&scn, &ris2, &w, &targets) >= before - 1e-6);
    }

    #[test]
    fn varsigma_min_symmetric_fixed_point_and_margin() {
        let scn = desk(13);
        let targets = scn.config.sinr_targets.clone();
        let (ris, _) = init_state(&scn).unwrap();
        let params = PowMinParams::default();
        let w = feasible_start(&scn, &ris, &targets, &params).unwrap();
        let before = min_sinr_ratio(&scn, &ris, &w, &targets);
        let vs = update_varsigma_min(&scn, &ris, &w, &targets, &params);
        let mut ris2 = ris.clone();
        ris2.varsigma = vs;
        assert!(min_sinr_ratio(&scn, &ris2, &w, &targets) >= before - 1e-6);
        assert!(ris2.varsigma.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn scalar_search_matches_grid() {
        // Non-convex scalar landscape: the bracketed golden section must get
        // within 1e-3 of a fine grid.
        let f = |x: f64| (6.0 * x).sin() * 0.3 + (x - 0.3) * (x - 0.3);
        let got = min_scalar_on_unit_interval(f, 16);
        let mut best = f64::INFINITY;
        for i in 0..=10_000 {
            best = best.min(f(i as f64 / 10_000.0));
        }
        assert!(f(got) <= best + 1e-3);
    }

    #[test]
    fn run_power_min_zero_targets() {
        let scn = desk(14);
        let params = PowMinParams::default();
        let (ris, w, trace) = run_power_min(&scn, &[0.0, 0.0], &params).unwrap();
        assert_eq!(trace.final_objective(), Some(0.0));
        assert!(trace.converged);
        assert!(crate::model::bs_power(&w) == 0.0);
        assert!(ris.amp.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn run_power_min_keeps_targets_and_monotone_wa() {
        let scn = desk(15);
        let targets = scn.config.sinr_targets.clone();
        let params = PowMinParams { max_outer: 10, ..Default::default() };
        let (ris, w, trace) = run_power_min(&scn, &targets, &params).unwrap();
        for k in 0..scn.n_users() {
            let s = sinr(&scn, &ris, &w, k);
            assert!(s >= targets[k] * (1.0 - 1e-6), "user {k}: {s} < {}", targets[k]);
        }
        let pairs: Vec<f64> = trace.iterations.iter().map(|r| r.power_after_wa.unwrap()).collect();
        for w2 in pairs.windows(2) {
            assert!(
                w2[1] <= w2[0] * (1.0 + 1e-8),
                "W/A pair power increased: {} -> {}",
                w2[0],
                w2[1]
            );
        }
    }

    #[test]
    fn run_power_min_infeasible_on_absurd_targets() {
        let mut cfg = ScenarioConfig::desk();
        cfg.n_antennas = 2;
        cfg.n_users = 2;
        cfg.n_users_reflect = 1;
        cfg.sinr_targets = vec![db_to_linear(60.0); 2];
        let scn = build_scenario(&cfg).unwrap();
        let params = PowMinParams { scaleup_cap: 6, ..Default::default() };
        let err = run_power_min(&scn, &scn.config.sinr_targets, &params).unwrap_err();
        assert!(err.is_infeasible(), "expected infeasibility, got {err}");
    }
}
