//! Shared helpers for the integration and acceptance suites.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ris_optim::linalg::{norm_sq, CVec, RVec};
use ris_optim::model::{BeamformerSet, RisState};
use ris_optim::scenario::{stream_rng, Scenario};

/// Physically scaled random design point: random unit-modulus phases, random
/// amplitude split, beamformers on the BS power sphere, gains around the
/// budget-matched uniform level.
pub fn random_state(scn: &Scenario, seed: u64) -> (RisState, BeamformerSet) {
    let mut rng = stream_rng(seed, 77);
    let m = scn.n_elements();
    let phases = |rng: &mut ChaCha8Rng| {
        CVec::from_fn(m, |_, _| {
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            C64::new(t.cos(), t.sin())
        })
    };
    let phi_r = phases(&mut rng);
    let phi_t = phases(&mut rng);
    let varsigma = RVec::from_fn(m, |_, _| rng.random_range(0.0..1.0));
    let mut w = Vec::new();
    for _ in 0..scn.n_users() {
        w.push(CVec::from_fn(scn.n_antennas(), |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }));
    }
    let total: f64 = w.iter().map(norm_sq).sum();
    let scale = C64::new((scn.config.budget_bs / total).sqrt(), 0.0);
    let w = BeamformerSet { w: w.into_iter().map(|v| v * scale).collect() };

    let mut incident = 0.0;
    for wk in &w.w {
        incident += norm_sq(&(&scn.g * wk));
    }
    let a_uniform = scn.config.budget_ris / (incident + scn.config.noise_ris * m as f64);
    let amp = RVec::from_fn(m, |_, _| rng.random_range(0.1..1.0) * a_uniform);
    (RisState { phi_r, phi_t, amp, varsigma }, w)
}

/// Mean over a slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
