//! Reproducible problem-instance generation.
//!
//! A [`ScenarioConfig`] holds every knob in linear SI units (watts, meters,
//! linear gains). Human-facing JSON configs use dB/dBm and are converted at
//! the parse boundary by [`ConfigFile`]. [`build_scenario`] turns a config
//! into an immutable [`Scenario`] with all channel matrices drawn from
//! per-channel ChaCha streams, so regenerating with the same seed is
//! bit-identical and adding a channel never perturbs the others.

use std::f64::consts::PI;


use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RisError};
use crate::linalg::{C64, CMat, CVec};

/// Amplitude-coefficient operating mode of the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Optimal power: every `varsigma_m` free within `[0, 1]`.
    Op,
    /// Equal power: `varsigma_m = 1/sqrt(2)` fixed.
    Ep,
    /// Space division: first half of the elements reflect, second half transmit.
    Sd,
}

impl std::str::FromStr for Mode {
    type Err = RisError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "op" => Ok(Mode::Op),
            "ep" => Ok(Mode::Ep),
            "sd" => Ok(Mode::Sd),
            other => Err(RisError::Config(format!("unknown mode `{other}` (expected op|ep|sd)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Op => write!(f, "op"),
            Mode::Ep => write!(f, "ep"),
            Mode::Sd => write!(f, "sd"),
        }
    }
}

/// Full problem description in linear SI units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_antennas: usize,
    pub n_elements: usize,
    pub n_users: usize,
    /// Number of users served by the reflective surface (the rest transmit-side).
    pub n_users_reflect: usize,
    /// BS-to-RIS distance in meters.
    pub bs_ris_distance: f64,
    /// Radius of the user circle centered at the RIS, meters.
    pub user_radius: f64,
    /// Path-loss gain at the reference distance (linear).
    pub pathloss_ref_gain: f64,
    /// Reference distance in meters.
    pub pathloss_ref_distance: f64,
    pub exponent_bs_ris: f64,
    pub exponent_ris_user: f64,
    pub exponent_direct_reflect: f64,
    pub exponent_direct_transmit: f64,
    /// Rician K-factor of the BS-RIS channel (linear).
    pub rician_factor: f64,
    /// Receiver noise power, watts (common to all users).
    pub noise_user: f64,
    /// Noise power introduced per RIS element, watts.
    pub noise_ris: f64,
    /// BS transmit power budget, watts.
    pub budget_bs: f64,
    /// Total RIS power budget, watts.
    pub budget_ris: f64,
    /// Per-element power supply limit, watts.
    pub budget_element: f64,
    /// Per-user SINR targets (linear), length `n_users`.
    pub sinr_targets: Vec<f64>,
    pub mode: Mode,
    pub rng_seed: u64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

impl ScenarioConfig {
    /// The simulation setup used throughout the reference experiments:
    /// N=16, M=128, K=4 with two users on each side, 80 m BS-RIS distance.
    pub fn paper_default() -> Self {
        let budget_ris = dbm_to_watts(10.0);
        let m = 128;
        ScenarioConfig {
            n_antennas: 16,
            n_elements: m,
            n_users: 4,
            n_users_reflect: 2,
            bs_ris_distance: 80.0,
            user_radius: 10.0,
            pathloss_ref_gain: db_to_linear(-30.0),
            pathloss_ref_distance: 1.0,
            exponent_bs_ris: 2.5,
            exponent_ris_user: 2.0,
            exponent_direct_reflect: 3.6,
            exponent_direct_transmit: 4.2,
            rician_factor: db_to_linear(3.0),
            noise_user: dbm_to_watts(-80.0),
            noise_ris: dbm_to_watts(-80.0),
            budget_bs: dbm_to_watts(16.0),
            budget_ris,
            budget_element: 2.0 * budget_ris / m as f64,
            sinr_targets: vec![db_to_linear(12.0); 4],
            mode: Mode::Op,
            rng_seed: 1,
        }
    }

    /// Small instance (N=4, M=16, K=2) for second-scale tests and CI.
    pub fn desk() -> Self {
        let budget_ris = dbm_to_watts(10.0);
        let m = 16;
        ScenarioConfig {
            n_antennas: 4,
            n_elements: m,
            n_users: 2,
            n_users_reflect: 1,
            budget_element: 2.0 * budget_ris / m as f64,
            sinr_targets: vec![db_to_linear(12.0); 2],
            ..Self::paper_default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-default" => Ok(Self::paper_default()),
            "desk" => Ok(Self::desk()),
            other => Err(RisError::Config(format!(
                "unknown preset `{other}` (expected paper-default|desk)"
            ))),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(RisError::Config(msg));
        if self.n_antennas < 1 || self.n_elements < 1 || self.n_users < 1 {
            return fail("all counts must be >= 1".into());
        }
        if self.n_users_reflect > self.n_users {
            return fail(format!(
                "n_users_reflect ({}) exceeds n_users ({})",
                self.n_users_reflect, self.n_users
            ));
        }
        for (name, v) in [
            ("bs_ris_distance", self.bs_ris_distance),
            ("user_radius", self.user_radius),
            ("pathloss_ref_gain", self.pathloss_ref_gain),
            ("pathloss_ref_distance", self.pathloss_ref_distance),
            ("exponent_bs_ris", self.exponent_bs_ris),
            ("exponent_ris_user", self.exponent_ris_user),
            ("exponent_direct_reflect", self.exponent_direct_reflect),
            ("exponent_direct_transmit", self.exponent_direct_transmit),
            ("noise_user", self.noise_user),
            ("noise_ris", self.noise_ris),
            ("budget_bs", self.budget_bs),
            ("budget_ris", self.budget_ris),
            ("budget_element", self.budget_element),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.rician_factor < 0.0 || !self.rician_factor.is_finite() {
            return fail(format!("rician_factor must be >= 0, got {}", self.rician_factor));
        }
        if self.sinr_targets.len() != self.n_users {
            return fail(format!(
                "sinr_targets length {} != n_users {}",
                self.sinr_targets.len(),
                self.n_users
            ));
        }
        if self.sinr_targets.iter().any(|g| *g < 0.0 || !g.is_finite()) {
            return fail("sinr_targets must be finite and >= 0".into());
        }
        // Thermal load: the element supplies must be able to carry the full budget.
        let total_supply = self.budget_element * self.n_elements as f64;
        if self.budget_ris > total_supply * (1.0 + 1e-12) {
            return fail(format!(
                "budget_ris ({}) exceeds the summed element supplies ({})",
                self.budget_ris, total_supply
            ));
        }
        Ok(())
    }
}

/// Human-facing JSON config. All fields optional over a named preset base;
/// powers in dBm, gains/targets in dB.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub n_antennas: Option<usize>,
    pub n_elements: Option<usize>,
    pub n_users: Option<usize>,
    pub n_users_reflect: Option<usize>,
    pub bs_ris_distance_m: Option<f64>,
    pub user_radius_m: Option<f64>,
    pub pathloss_ref_gain_db: Option<f64>,
    pub pathloss_ref_distance_m: Option<f64>,
    pub pathloss_exp_bs_ris: Option<f64>,
    pub pathloss_exp_ris_user: Option<f64>,
    pub pathloss_exp_direct_reflect: Option<f64>,
    pub pathloss_exp_direct_transmit: Option<f64>,
    pub rician_factor_db: Option<f64>,
    pub noise_user_dbm: Option<f64>,
    pub noise_ris_dbm: Option<f64>,
    pub budget_bs_dbm: Option<f64>,
    pub budget_ris_dbm: Option<f64>,
    pub budget_element_dbm: Option<f64>,
    pub sinr_target_db: Option<f64>,
    pub sinr_targets_db: Option<Vec<f64>>,
    pub mode: Option<Mode>,
    pub rng_seed: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Resolve to a linear-unit config, layering overrides on the preset base.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let base = self.preset.as_deref().unwrap_or("paper-default");
        let mut cfg = ScenarioConfig::preset(base)?;
        if let Some(v) = self.n_antennas {
            cfg.n_antennas = v;
        }
        if let Some(v) = self.n_elements {
            cfg.n_elements = v;
            // Keep the default supply rule consistent unless explicitly overridden.
            if self.budget_element_dbm.is_none() {
                cfg.budget_element = 2.0 * cfg.budget_ris / v as f64;
            }
        }
        if let Some(v) = self.n_users {
            cfg.n_users = v;
            if self.sinr_target_db.is_none() && self.sinr_targets_db.is_none() {
                let g = cfg.sinr_targets.first().copied().unwrap_or(1.0);
                cfg.sinr_targets = vec![g; v];
            }
        }
        if let Some(v) = self.n_users_reflect {
            cfg.n_users_reflect = v;
        }
        if let Some(v) = self.bs_ris_distance_m {
            cfg.bs_ris_distance = v;
        }
        if let Some(v) = self.user_radius_m {
            cfg.user_radius = v;
        }
        if let Some(v) = self.pathloss_ref_gain_db {
            cfg.pathloss_ref_gain = db_to_linear(v);
        }
        if let Some(v) = self.pathloss_ref_distance_m {
            cfg.pathloss_ref_distance = v;
        }
        if let Some(v) = self.pathloss_exp_bs_ris {
            cfg.exponent_bs_ris = v;
        }
        if let Some(v) = self.pathloss_exp_ris_user {
            cfg.exponent_ris_user = v;
        }
        if let Some(v) = self.pathloss_exp_direct_reflect {
            cfg.exponent_direct_reflect = v;
        }
        if let Some(v) = self.pathloss_exp_direct_transmit {
            cfg.exponent_direct_transmit = v;
        }
        if let Some(v) = self.rician_factor_db {
            cfg.rician_factor = db_to_linear(v);
        }
        if let Some(v) = self.noise_user_dbm {
            cfg.noise_user = dbm_to_watts(v);
        }
        if let Some(v) = self.noise_ris_dbm {
            cfg.noise_ris = dbm_to_watts(v);
        }
        if let Some(v) = self.budget_bs_dbm {
            cfg.budget_bs = dbm_to_watts(v);
        }
        if let Some(v) = self.budget_ris_dbm {
            cfg.budget_ris = dbm_to_watts(v);
            if self.budget_element_dbm.is_none() {
                cfg.budget_element = 2.0 * cfg.budget_ris / cfg.n_elements as f64;
            }
        }
        if let Some(v) = self.budget_element_dbm {
            cfg.budget_element = dbm_to_watts(v);
        }
        if let Some(v) = self.sinr_target_db {
            cfg.sinr_targets = vec![db_to_linear(v); cfg.n_users];
        }
        if let Some(v) = &self.sinr_targets_db {
            cfg.sinr_targets = v.iter().map(|x| db_to_linear(*x)).collect();
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.rng_seed {
            cfg.rng_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Immutable problem instance: geometry has been sampled and all channels drawn.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// BS-to-RIS channel, `n_elements x n_antennas`.
    pub g: CMat,
    /// Direct BS-to-user channels, one length-`n_antennas` vector per user.
    pub h_d: Vec<CVec>,
    /// RIS-to-user channels, one length-`n_elements` vector per user.
    pub h_r: Vec<CVec>,
    /// Users served by the reflective surface.
    pub set_r: Vec<usize>,
    /// Users served by the transmissive surface.
    pub set_t: Vec<usize>,
    pub config: ScenarioConfig,
}

impl Scenario {
    pub fn n_antennas(&self) -> usize {
        self.config.n_antennas
    }
    pub fn n_elements(&self) -> usize {
        self.config.n_elements
    }
    pub fn n_users(&self) -> usize {
        self.config.n_users
    }
    pub fn is_reflect_user(&self, k: usize) -> bool {
        self.set_r.contains(&k)
    }
    /// Row `m` of `G` as a column vector `g_m`, so that `g_m^H w` is the
    /// signal arriving at element `m`.
    pub fn g_row(&self, m: usize) -> CVec {
        self.g.row(m).map(|z| z.conj()).transpose()
    }
}

// Stream ids for the per-channel ChaCha generators. Fixed so that adding a
// new consumer never shifts the draws of an existing one.
const STREAM_ANGLES: u64 = 1;
const STREAM_G: u64 = 2;
const STREAM_HR_BASE: u64 = 1_000;
const STREAM_HD_BASE: u64 = 2_000;
pub(crate) const STREAM_INIT: u64 = 3_000;

/// Deterministic ChaCha stream: one independent substream per purpose.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Distance-dependent path loss `C0 * (d0/d)^kappa` as a linear power gain.
pub fn path_loss(d: f64, kappa: f64, c0: f64, d0: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(RisError::Config(format!("non-positive distance {d}")));
    }
    if !(d0 > 0.0) {
        return Err(RisError::Config(format!("non-positive reference distance {d0}")));
    }
    Ok(c0 * (d0 / d).powf(kappa))
}

/// Line-of-sight geometry for a Rician draw: departure/arrival angles seen
/// from the two uniform linear arrays (half-wavelength spacing).
#[derive(Debug, Clone, Copy)]
pub struct LosGeometry {
    pub aod: f64,
    pub aoa: f64,
}

/// Unit-modulus ULA steering vector `[e^{j pi m sin(theta)}]_m`.
pub fn steering_vector(n: usize, theta: f64) -> CVec {
    CVec::from_fn(n, |m, _| {
        let phase = PI * m as f64 * theta.sin();
        C64::new(phase.cos(), phase.sin())
    })
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Small-scale Rician fading matrix scaled by the path loss:
/// `sqrt(pl) * (sqrt(k/(k+1)) LoS + sqrt(1/(k+1)) NLoS)` with the LoS part the
/// outer product of steering vectors and NLoS entries unit-variance complex
/// Gaussian. `rician_factor = 0` gives pure Rayleigh fading.
pub fn rician_channel(
    rows: usize,
    cols: usize,
    rician_factor: f64,
    pathloss: f64,
    geometry: LosGeometry,
    rng: &mut ChaCha8Rng,
) -> Result<CMat> {
    if rician_factor < 0.0 || !rician_factor.is_finite() {
        return Err(RisError::Config(format!("rician factor must be >= 0, got {rician_factor}")));
    }
    if !(pathloss > 0.0) {
        return Err(RisError::Config(format!("pathloss must be > 0, got {pathloss}")));
    }
    let los_w = (rician_factor / (rician_factor + 1.0)).sqrt();
    let nlos_w = (1.0 / (rician_factor + 1.0)).sqrt();
    let amp = pathloss.sqrt();

    let a_rx = steering_vector(rows, geometry.aoa);
    let a_tx = steering_vector(cols, geometry.aod);
    let mut h = CMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let los = a_rx[i] * a_tx[j].conj();
            let nlos = complex_gaussian(rng);
            h[(i, j)] = (los * los_w + nlos * nlos_w) * amp;
        }
    }
    Ok(h)
}

/// Sample the scenario geometry and draw every channel.
///
/// The BS sits at the origin, the RIS at `(d, 0)`. Reflect-side users get
/// uniform angles on the BS-side semicircle of the user circle, the rest on
/// the far semicircle. The first `n_users_reflect` user indices form `set_r`.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let n = cfg.n_antennas;
    let m = cfg.n_elements;
    let k = cfg.n_users;
    let kr = cfg.n_users_reflect;

    let set_r: Vec<usize> = (0..kr).collect();
    let set_t: Vec<usize> = (kr..k).collect();

    // User positions on the circle centered at the RIS.
    let ris_pos = (cfg.bs_ris_distance, 0.0);
    let mut angle_rng = stream_rng(cfg.rng_seed, STREAM_ANGLES);
    let mut user_pos = Vec::with_capacity(k);
    for idx in 0..k {
        let u: f64 = angle_rng.random_range(0.0..1.0);
        // Map to the BS-side semicircle for reflect users, far side otherwise.
        let psi = if idx < kr {
            PI / 2.0 + u * PI
        } else {
            PI / 2.0 + PI + u * PI
        };
        user_pos.push((
            ris_pos.0 + cfg.user_radius * psi.cos(),
            ris_pos.1 + cfg.user_radius * psi.sin(),
        ));
    }

    // BS -> RIS channel: Rician with the LoS implied by the geometry. Both
    // arrays are modeled as ULAs along the y-axis, so the link angle is the
    // bearing measured from the x-axis broadside.
    let pl_g = path_loss(cfg.bs_ris_distance, cfg.exponent_bs_ris, cfg.pathloss_ref_gain, cfg.pathloss_ref_distance)?;
    let mut g_rng = stream_rng(cfg.rng_seed, STREAM_G);
    let geom = LosGeometry { aod: 0.0, aoa: 0.0 };
    let g = rician_channel(m, n, cfg.rician_factor, pl_g, geom, &mut g_rng)?;

    let mut h_d = Vec::with_capacity(k);
    let mut h_r = Vec::with_capacity(k);
    for idx in 0..k {
        let (ux, uy) = user_pos[idx];
        let d_bs = (ux * ux + uy * uy).sqrt();
        let exp_d = if idx < kr { cfg.exponent_direct_reflect } else { cfg.exponent_direct_transmit };
        let pl_d = path_loss(d_bs, exp_d, cfg.pathloss_ref_gain, cfg.pathloss_ref_distance)?;
        let pl_r = path_loss(cfg.user_radius, cfg.exponent_ris_user, cfg.pathloss_ref_gain, cfg.pathloss_ref_distance)?;

        // Direct and RIS-user links are pure NLoS (Rayleigh).
        let mut hd_rng = stream_rng(cfg.rng_seed, STREAM_HD_BASE + idx as u64);
        let hd = rician_channel(n, 1, 0.0, pl_d, geom, &mut hd_rng)?;
        h_d.push(CVec::from_column_slice(hd.as_slice()));

        let mut hr_rng = stream_rng(cfg.rng_seed, STREAM_HR_BASE + idx as u64);
        let hr = rician_channel(m, 1, 0.0, pl_r, geom, &mut hr_rng)?;
        h_r.push(CVec::from_column_slice(hr.as_slice()));
    }

    Ok(Scenario { g, h_d, h_r, set_r, set_t, config: cfg.clone() })
}

// ---- channel dump export/import ------------------------------------------

fn cvec_to_pairs(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn cvec_from_pairs(p: &[[f64; 2]]) -> CVec {
    CVec::from_fn(p.len(), |i, _| C64::new(p[i][0], p[i][1]))
}

/// Serializable image of a [`Scenario`], complex entries as `[re, im]` pairs.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChannelDump {
    pub config: ScenarioConfig,
    pub set_r: Vec<usize>,
    pub set_t: Vec<usize>,
    /// Row-major `n_elements x n_antennas`.
    pub g: Vec<Vec<[f64; 2]>>,
    pub h_d: Vec<Vec<[f64; 2]>>,
    pub h_r: Vec<Vec<[f64; 2]>>,
}

impl Scenario {
    pub fn to_dump(&self) -> ChannelDump {
        let m = self.n_elements();
        let g_rows = (0..m)
            .map(|i| self.g.row(i).iter().map(|z| [z.re, z.im]).collect())
            .collect();
        ChannelDump {
            config: self.config.clone(),
            set_r: self.set_r.clone(),
            set_t: self.set_t.clone(),
            g: g_rows,
            h_d: self.h_d.iter().map(cvec_to_pairs).collect(),
            h_r: self.h_r.iter().map(cvec_to_pairs).collect(),
        }
    }

    pub fn from_dump(dump: &ChannelDump) -> Result<Self> {
        let cfg = &dump.config;
        cfg.validate()?;
        let (m, n, k) = (cfg.n_elements, cfg.n_antennas, cfg.n_users);
        if dump.g.len() != m || dump.g.iter().any(|r| r.len() != n) {
            return Err(RisError::Dimension(format!("channel dump: G must be {m}x{n}")));
        }
        if dump.h_d.len() != k || dump.h_r.len() != k {
            return Err(RisError::Dimension("channel dump: user channel count mismatch".into()));
        }
        if dump.h_d.iter().any(|v| v.len() != n) || dump.h_r.iter().any(|v| v.len() != m) {
            return Err(RisError::Dimension("channel dump: user channel length mismatch".into()));
        }
        let g = CMat::from_fn(m, n, |i, j| C64::new(dump.g[i][j][0], dump.g[i][j][1]));
        Ok(Scenario {
            g,
            h_d: dump.h_d.iter().map(|v| cvec_from_pairs(v)).collect(),
            h_r: dump.h_r.iter().map(|v| cvec_from_pairs(v)).collect(),
            set_r: dump.set_r.clone(),
            set_t: dump.set_t.clone(),
            config: cfg.clone(),
        })
    }
}
