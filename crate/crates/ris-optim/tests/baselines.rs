//! Random-search baseline oracles: on a tiny instance, each solver must beat
//! ten thousand random feasible design points, and the certified blocks must
//! be idempotent.

use num_complex::Complex64 as C64;
use rand::Rng;

use ris_optim::linalg::{norm_sq, CVec, RVec};
use ris_optim::model::{
    bs_power, mmse_beamformers, sum_rate, total_transmit_power, BeamformerSet,
    RisState,
};
use ris_optim::powmin::{min_sinr_ratio, run_power_min, update_beamformers_min, PowMinParams};
use ris_optim::scenario::{build_scenario, stream_rng, Mode, Scenario, ScenarioConfig};
use ris_optim::sumrate::{run_sum_rate, SumRateParams};

fn toy_config(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::desk().with_seed(seed);
    cfg.n_antennas = 2;
    cfg.n_elements = 2;
    cfg.n_users = 2;
    cfg.n_users_reflect = 1;
    cfg.budget_element = 2.0 * cfg.budget_ris / 2.0;
    cfg.sinr_targets = vec![ris_optim::scenario::db_to_linear(6.0); 2];
    cfg
}

/// Random design point: beamformers on the BS power sphere, uniform phases,
/// balanced split, amplification from the budget-matching uniform rule.
fn random_feasible_point(scn: &Scenario, rng: &mut rand_chacha::ChaCha8Rng) -> (RisState, BeamformerSet) {
    let m = scn.n_elements();
    let phases = |rng: &mut rand_chacha::ChaCha8Rng| {
        CVec::from_fn(m, |_, _| {
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            C64::new(t.cos(), t.sin())
        })
    };
    let phi_r = phases(rng);
    let phi_t = phases(rng);
    let mut w: Vec<CVec> = (0..scn.n_users())
        .map(|_| {
            CVec::from_fn(scn.n_antennas(), |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        })
        .collect();
    let total: f64 = w.iter().map(norm_sq).sum();
    let scale = C64::new((scn.config.budget_bs / total).sqrt(), 0.0);
    for wk in &mut w {
        *wk *= scale;
    }
    let w = BeamformerSet { w };
    let mut incident = 0.0;
    for wk in &w.w {
        incident += norm_sq(&(&scn.g * wk));
    }
    let a = scn.config.budget_ris / (incident + scn.config.noise_ris * m as f64);
    // The uniform budget rule can still overload one element; scale to the cap.
    let mut amp = RVec::from_element(m, a);
    for i in 0..m {
        let g_i = scn.g_row(i);
        let rho: f64 = w.w.iter().map(|wk| g_i.dotc(wk).norm_sqr()).sum();
        let cap = scn.config.budget_element / (rho + scn.config.noise_ris);
        amp[i] = amp[i].min(cap);
    }
    let ris = RisState {
        phi_r,
        phi_t,
        amp,
        varsigma: RVec::from_element(m, std::f64::consts::FRAC_1_SQRT_2),
    };
    (ris, w)
}

#[test]
fn sum_rate_beats_random_search() {
    let cfg = toy_config(77);
    let scn = build_scenario(&cfg).unwrap();
    let (_, _, trace) = run_sum_rate(&scn, &SumRateParams::default(), Mode::Op).unwrap();
    let solved = trace.final_objective().unwrap();

    let mut rng = stream_rng(123, 5);
    let mut best_random: f64 = 0.0;
    for _ in 0..10_000 {
        let (ris, w) = random_feasible_point(&scn, &mut rng);
        best_random = best_random.max(sum_rate(&scn, &ris, &w));
    }
    assert!(
        solved >= best_random,
        "solver {solved:.4} must beat the best of 10^4 random states {best_random:.4}"
    );
}

#[test]
fn power_min_beats_random_search() {
    let cfg = toy_config(78);
    let scn = build_scenario(&cfg).unwrap();
    let targets = cfg.sinr_targets.clone();
    let (_, _, trace) = run_power_min(&scn, &targets, &PowMinParams::default()).unwrap();
    let solved = trace.final_objective().unwrap();

    // Random feasible competitor: random surface state with MMSE-direction
    // beamformers scaled just enough to meet the targets.
    let mut rng = stream_rng(124, 6);
    let mut best_random = f64::INFINITY;
    let mut feasible_found = 0usize;
    for _ in 0..10_000 {
        let (ris, _) = random_feasible_point(&scn, &mut rng);
        let Ok(dirs) = mmse_beamformers(&scn, &ris, scn.config.budget_bs) else {
            continue;
        };
        // Bisection on the power scale to the smallest feasible multiple.
        let ratio_at = |scale: f64| {
            let w = BeamformerSet { w: dirs.w.iter().map(|v| v * C64::new(scale.sqrt(), 0.0)).collect() };
            min_sinr_ratio(&scn, &ris, &w, &targets)
        };
        if ratio_at(1e6) < 1.0 {
            continue;
        }
        let (mut lo, mut hi) = (0.0f64, 1e6f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ratio_at(mid) >= 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let w = BeamformerSet {
            w: dirs.w.iter().map(|v| v * C64::new(hi.sqrt(), 0.0)).collect(),
        };
        let element_ok = (0..scn.n_elements()).all(|m| {
            let g_m = scn.g_row(m);
            let rho: f64 = w.w.iter().map(|wk| g_m.dotc(wk).norm_sqr()).sum();
            ris.amp[m] * (rho + scn.config.noise_ris) <= scn.config.budget_element
        });
        if element_ok && min_sinr_ratio(&scn, &ris, &w, &targets) >= 1.0 {
            feasible_found += 1;
            best_random = best_random.min(total_transmit_power(&scn, &ris, &w));
        }
    }
    assert!(feasible_found > 100, "baseline generator produced too few feasible points");
    assert!(
        solved <= best_random,
        "solver {solved:.6e} W must beat the best of {feasible_found} random feasible states {best_random:.6e} W"
    );
}

#[test]
fn powmin_beamformer_block_is_idempotent() {
    let scn = build_scenario(&ScenarioConfig::desk().with_seed(9)).unwrap();
    let targets = scn.config.sinr_targets.clone();
    let params = PowMinParams::default();
    // A feasible state from a few solver iterations.
    let (ris, w2, _) =
        run_power_min(&scn, &targets, &PowMinParams { max_outer: 3, ..params.clone() }).unwrap();
    let w_first = update_beamformers_min(&scn, &ris, &targets, &params, Some(&w2)).unwrap();
    let p_first = bs_power(&w_first);
    let w_second = update_beamformers_min(&scn, &ris, &targets, &params, Some(&w_first)).unwrap();
    let p_second = bs_power(&w_second);
    assert!(
        (p_first - p_second).abs() <= 1e-9 * p_first.max(1e-300),
        "re-solving a certified block moved the power: {p_first:.9e} -> {p_second:.9e}"
    );
}
