//! Joint design state and physical-quantity evaluators: equivalent channels,
//! SINR, sum rate, BS/RIS/element powers, constraint slacks, and the
//! MMSE-based initialization.
//!
//! Conventions: the surface applies, per element `m`, an amplitude gain
//! `sqrt(a_m)` (stored as the power gain `a_m`), a reflection amplitude
//! `varsigma_m` and transmission amplitude `sqrt(1 - varsigma_m^2)`, and
//! unit-modulus phase shifts `phi_r,m` / `phi_t,m`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RisError};
use crate::linalg::{cdot, norm_sq, C64, CVec, RVec};
use crate::scenario::{stream_rng, Scenario, STREAM_INIT};

/// Which surface serves a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Reflect,
    Transmit,
}

impl Scenario {
    pub fn side(&self, k: usize) -> Side {
        if self.is_reflect_user(k) {
            Side::Reflect
        } else {
            Side::Transmit
        }
    }
}

/// Surface configuration: phases, amplification power gains, amplitude split.
#[derive(Debug, Clone, PartialEq)]
pub struct RisState {
    pub phi_r: CVec,
    pub phi_t: CVec,
    /// Per-element amplification power gain `a_m` (amplitude gain is `sqrt(a_m)`).
    pub amp: RVec,
    /// Reflection amplitude coefficients, each in `[0, 1]`.
    pub varsigma: RVec,
}

impl RisState {
    pub fn n_elements(&self) -> usize {
        self.amp.len()
    }

    /// Amplitude coefficient on the given side.
    pub fn e(&self, m: usize, side: Side) -> f64 {
        match side {
            Side::Reflect => self.varsigma[m],
            Side::Transmit => (1.0 - self.varsigma[m] * self.varsigma[m]).max(0.0).sqrt(),
        }
    }

    pub fn phi(&self, side: Side) -> &CVec {
        match side {
            Side::Reflect => &self.phi_r,
            Side::Transmit => &self.phi_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_elements();
        if self.phi_r.len() != m || self.phi_t.len() != m || self.varsigma.len() != m {
            return Err(RisError::Dimension("RIS state vectors must share one length".into()));
        }
        for i in 0..m {
            if (self.phi_r[i].norm() - 1.0).abs() > 1e-12 || (self.phi_t[i].norm() - 1.0).abs() > 1e-12 {
                return Err(RisError::Numerical(format!("phase {i} off the unit circle")));
            }
            if !(0.0..=1.0).contains(&self.varsigma[i]) {
                return Err(RisError::Numerical(format!("varsigma[{i}] = {} outside [0,1]", self.varsigma[i])));
            }
            if self.amp[i] < 0.0 {
                return Err(RisError::Numerical(format!("amp[{i}] = {} negative", self.amp[i])));
            }
        }
        Ok(())
    }
}

/// One transmit beamformer per user.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub w: Vec<CVec>,
}

impl BeamformerSet {
    pub fn zeros(n_antennas: usize, n_users: usize) -> Self {
        BeamformerSet { w: vec![CVec::zeros(n_antennas); n_users] }
    }

    pub fn n_users(&self) -> usize {
        self.w.len()
    }
}

/// Per-constraint slacks; nonnegative slack means the constraint is met.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub bs_power_slack: f64,
    pub ris_power_slack: f64,
    pub per_element_slack: Vec<f64>,
    /// Worst deviation of any phase from unit modulus.
    pub unit_modulus_residual: f64,
    /// How far any `varsigma_m` sits outside `[0, 1]` (0 when all inside).
    pub varsigma_range_violation: f64,
    /// `SINR_k - gamma_k` per user.
    pub sinr_slack: Vec<f64>,
}

impl ConstraintReport {
    /// True when every power/SINR slack is above `-tol` and the state
    /// constraints hold within `state_tol`.
    pub fn satisfied(&self, tol: f64, state_tol: f64) -> bool {
        self.bs_power_slack >= -tol
            && self.ris_power_slack >= -tol
            && self.per_element_slack.iter().all(|s| *s >= -tol)
            && self.unit_modulus_residual <= state_tol
            && self.varsigma_range_violation <= state_tol
            && self.sinr_slack.iter().all(|s| *s >= -tol)
    }

    pub fn min_power_slack(&self) -> f64 {
        self.per_element_slack
            .iter()
            .fold(self.bs_power_slack.min(self.ris_power_slack), |acc, s| acc.min(*s))
    }
}

/// Cascade coefficient vector `s` with `s_m = h_r,k,m conj(phi_m) e_m sqrt(a_m)`,
/// so that the equivalent channel is `h_d,k + G^H s`.
fn cascade(scn: &Scenario, ris: &RisState, k: usize) -> CVec {
    let side = scn.side(k);
    let phi = ris.phi(side);
    let hr = &scn.h_r[k];
    CVec::from_fn(scn.n_elements(), |m, _| {
        hr[m] * phi[m].conj() * C64::new(ris.e(m, side) * ris.amp[m].sqrt(), 0.0)
    })
}

/// Equivalent BS-to-user channel through the serving surface.
pub fn equivalent_channel(scn: &Scenario, ris: &RisState, k: usize) -> CVec {
    let s = cascade(scn, ris, k);
    &scn.h_d[k] + scn.g.ad_mul(&s)
}

/// Thermal noise forwarded by the surface to user `k`:
/// `sigma_v^2 * || h_r,k^H E A ||^2`.
pub fn ris_noise_power(scn: &Scenario, ris: &RisState, k: usize) -> f64 {
    let side = scn.side(k);
    let hr = &scn.h_r[k];
    let sum: f64 = (0..scn.n_elements())
        .map(|m| {
            let e = ris.e(m, side);
            hr[m].norm_sqr() * e * e * ris.amp[m]
        })
        .sum();
    scn.config.noise_ris * sum
}

/// Interference-plus-noise power at user `k` (the SINR denominator).
pub fn interference_plus_noise(scn: &Scenario, ris: &RisState, w: &BeamformerSet, k: usize) -> f64 {
    let h_eq = equivalent_channel(scn, ris, k);
    let interference: f64 = (0..scn.n_users())
        .filter(|j| *j != k)
        .map(|j| cdot(&h_eq, &w.w[j]).norm_sqr())
        .sum();
    interference + ris_noise_power(scn, ris, k) + scn.config.noise_user
}

pub fn sinr(scn: &Scenario, ris: &RisState, w: &BeamformerSet, k: usize) -> f64 {
    let h_eq = equivalent_channel(scn, ris, k);
    let signal = cdot(&h_eq, &w.w[k]).norm_sqr();
    let interference: f64 = (0..scn.n_users())
        .filter(|j| *j != k)
        .map(|j| cdot(&h_eq, &w.w[j]).norm_sqr())
        .sum();
    signal / (interference + ris_noise_power(scn, ris, k) + scn.config.noise_user)
}

/// Achievable sum rate in bits/s/Hz.
pub fn sum_rate(scn: &Scenario, ris: &RisState, w: &BeamformerSet) -> f64 {
    (0..scn.n_users()).map(|k| (1.0 + sinr(scn, ris, w, k)).log2()).sum()
}

pub fn bs_power(w: &BeamformerSet) -> f64 {
    w.w.iter().map(norm_sq).sum()
}

/// Power drawn by element `m`: `a_m (sum_k |g_m^H w_k|^2 + sigma_v^2)`.
pub fn element_power(scn: &Scenario, ris: &RisState, w: &BeamformerSet, m: usize) -> f64 {
    let g_m = scn.g_row(m);
    let incident: f64 = w.w.iter().map(|wk| cdot(&g_m, wk).norm_sqr()).sum();
    ris.amp[m] * (incident + scn.config.noise_ris)
}

/// Total power emitted by the surface: `sum_k ||A G w_k||^2 + sigma_v^2 ||A||_F^2`.
pub fn ris_power(scn: &Scenario, ris: &RisState, w: &BeamformerSet) -> f64 {
    let mut total = scn.config.noise_ris * ris.amp.sum();
    for wk in &w.w {
        let gw = &scn.g * wk;
        total += (0..scn.n_elements()).map(|m| ris.amp[m] * gw[m].norm_sqr()).sum::<f64>();
    }
    total
}

/// Unweighted total transmit power `sum ||w_k||^2 + sum ||A G w_k||^2`
/// tracked by the power-minimization loop.
pub fn total_transmit_power(scn: &Scenario, ris: &RisState, w: &BeamformerSet) -> f64 {
    let mut amplified = 0.0;
    for wk in &w.w {
        let gw = &scn.g * wk;
        amplified += (0..scn.n_elements()).map(|m| ris.amp[m] * gw[m].norm_sqr()).sum::<f64>();
    }
    bs_power(w) + amplified
}

pub fn check_constraints(
    scn: &Scenario,
    ris: &RisState,
    w: &BeamformerSet,
    targets: &[f64],
) -> ConstraintReport {
    let cfg = &scn.config;
    let m_count = scn.n_elements();
    let per_element_slack: Vec<f64> = (0..m_count)
        .map(|m| cfg.budget_element - element_power(scn, ris, w, m))
        .collect();
    let unit_modulus_residual = (0..m_count)
        .map(|m| {
            let dr = (ris.phi_r[m].norm() - 1.0).abs();
            let dt = (ris.phi_t[m].norm() - 1.0).abs();
            dr.max(dt)
        })
        .fold(0.0f64, f64::max);
    let varsigma_range_violation = ris
        .varsigma
        .iter()
        .map(|s| (-s).max(s - 1.0).max(0.0))
        .fold(0.0f64, f64::max);
    let sinr_slack = (0..scn.n_users())
        .map(|k| sinr(scn, ris, w, k) - targets.get(k).copied().unwrap_or(0.0))
        .collect();
    ConstraintReport {
        bs_power_slack: cfg.budget_bs - bs_power(w),
        ris_power_slack: cfg.budget_ris - ris_power(scn, ris, w),
        per_element_slack,
        unit_modulus_residual,
        varsigma_range_violation,
        sinr_slack,
    }
}

/// MMSE beamformers for the equivalent channels induced by `ris`, scaled so
/// that the total transmit power is exactly `p_total`.
pub fn mmse_beamformers(scn: &Scenario, ris: &RisState, p_total: f64) -> Result<BeamformerSet> {
    let n = scn.n_antennas();
    let k_users = scn.n_users();
    let channels: Vec<CVec> = (0..k_users).map(|k| equivalent_channel(scn, ris, k)).collect();
    let mut gram = DMatrix::<C64>::zeros(n, n);
    for h in &channels {
        gram += h * h.adjoint();
    }
    let mut w = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let sigma_eff = ris_noise_power(scn, ris, k) + scn.config.noise_user;
        let reg = &gram + DMatrix::<C64>::identity(n, n) * C64::new(sigma_eff, 0.0);
        let chol = reg
            .cholesky()
            .ok_or_else(|| RisError::Numerical("MMSE Gram matrix not positive definite".into()))?;
        w.push(chol.solve(&channels[k]));
    }
    let total: f64 = w.iter().map(norm_sq).sum();
    if total <= 0.0 {
        return Err(RisError::Numerical("MMSE beamformers vanished".into()));
    }
    let scale = C64::new((p_total / total).sqrt(), 0.0);
    for wk in &mut w {
        *wk *= scale;
    }
    Ok(BeamformerSet { w })
}

/// Initial design point: equal-split amplitudes, random unit-modulus phases,
/// uniform amplification meeting the RIS budget with equality, and normalized
/// MMSE beamformers.
pub fn init_state(scn: &Scenario) -> Result<(RisState, BeamformerSet)> {
    use rand::Rng;
    let cfg = &scn.config;
    let m = scn.n_elements();
    let mut rng = stream_rng(cfg.rng_seed, STREAM_INIT);
    let mut random_phases = |count: usize| {
        CVec::from_fn(count, |_, _| {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            C64::new(theta.cos(), theta.sin())
        })
    };
    let phi_r = random_phases(m);
    let phi_t = random_phases(m);
    let varsigma = RVec::from_element(m, std::f64::consts::FRAC_1_SQRT_2);

    // Provisional beamformers on the direct channels fix the amplification
    // scale; the final MMSE pass then uses the induced equivalent channels.
    let mut ris = RisState { phi_r, phi_t, amp: RVec::zeros(m), varsigma };
    let w0 = mmse_beamformers(scn, &ris, cfg.budget_bs)?;
    let a0 = amp_budget_gain(scn, &w0);
    ris.amp = RVec::from_element(m, a0);

    let w = mmse_beamformers(scn, &ris, cfg.budget_bs)?;
    // Re-fit the uniform gain to the final beamformers so the RIS budget
    // holds with equality.
    ris.amp = RVec::from_element(m, amp_budget_gain(scn, &w));
    Ok((ris, w))
}

/// Uniform power gain `a_max^2 = P_R / (sum_k ||G w_k||^2 + sigma_v^2 M)`.
fn amp_budget_gain(scn: &Scenario, w: &BeamformerSet) -> f64 {
    let mut incident = 0.0;
    for wk in &w.w {
        incident += norm_sq(&(&scn.g * wk));
    }
    scn.config.budget_ris / (incident + scn.config.noise_ris * scn.n_elements() as f64)
}

// ---- state export / import -------------------------------------------------

fn pairs(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(p: &[[f64; 2]]) -> CVec {
    CVec::from_fn(p.len(), |i, _| C64::new(p[i][0], p[i][1]))
}

/// Serializable image of a full design point (`[re, im]` pair convention).
#[derive(Debug, Serialize, Deserialize)]
pub struct StateDump {
    pub phi_r: Vec<[f64; 2]>,
    pub phi_t: Vec<[f64; 2]>,
    pub amp: Vec<f64>,
    pub varsigma: Vec<f64>,
    pub beamformers: Vec<Vec<[f64; 2]>>,
}

impl StateDump {
    pub fn new(ris: &RisState, w: &BeamformerSet) -> Self {
        StateDump {
            phi_r: pairs(&ris.phi_r),
            phi_t: pairs(&ris.phi_t),
            amp: ris.amp.iter().copied().collect(),
            varsigma: ris.varsigma.iter().copied().collect(),
            beamformers: w.w.iter().map(pairs).collect(),
        }
    }

    pub fn unpack(&self) -> (RisState, BeamformerSet) {
        let ris = RisState {
            phi_r: from_pairs(&self.phi_r),
            phi_t: from_pairs(&self.phi_t),
            amp: RVec::from_vec(self.amp.clone()),
            varsigma: RVec::from_vec(self.varsigma.clone()),
        };
        let w = BeamformerSet { w: self.beamformers.iter().map(|v| from_pairs(v)).collect() };
        (ris, w)
    }
}
