//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them all).

mod common;

use common::{mean, random_state};
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use ris_optim::convex::{solve_qcqp, QcqpProblem, QcqpStatus};
use ris_optim::linalg::{CMat, CVec, RMat, RVec};
use ris_optim::manifold::{
    minimize_quadratic_on_circles, CircleObjective, CirclePoint, ManifoldParams,
    QuadraticObjective,
};
use ris_optim::model::{sinr, sum_rate};
use ris_optim::powmin::{
    min_scalar_on_unit_interval, qos_state, run_power_min, LsePhaseObjective, PowMinParams,
    VarsigmaBalanceObjective,
};
use ris_optim::scenario::{
    build_scenario, db_to_linear, dbm_to_watts, stream_rng, Mode, ScenarioConfig,
};
use ris_optim::sumrate::{
    build_varsigma_quadratics, run_sum_rate, surrogate, update_gamma, update_tau, AuxState,
    SumRateParams, varsigma_element_coefficients, varsigma_scalar_min, varsigma_scalar_objective,
};
use ris_optim::model::Side;

fn report(name: &str, pass: bool, detail: &str) {
    println!("{name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name} failed: {detail}");
}

fn desk(seed: u64) -> ris_optim::Scenario {
    build_scenario(&ScenarioConfig::desk().with_seed(seed)).unwrap()
}

fn optimal_aux(
    scn: &ris_optim::Scenario,
    ris: &ris_optim::model::RisState,
    w: &ris_optim::model::BeamformerSet,
) -> AuxState {
    let gamma = update_gamma(scn, ris, w);
    let tau = update_tau(scn, ris, w, &gamma);
    AuxState { gamma, tau }
}

#[test]
fn criterion_01_fp_equivalence() {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let scn = desk(1_000 + seed);
        let (ris, w) = random_state(&scn, 2_000 + seed);
        let aux = optimal_aux(&scn, &ris, &w);
        let lhs = surrogate(&scn, &ris, &w, &aux);
        let rate = sum_rate(&scn, &ris, &w);
        worst = worst.max((lhs - rate).abs() / rate.abs().max(1e-300));
    }
    report(
        "criterion 01 fp-equivalence",
        worst <= 1e-9,
        &format!("worst relative gap {worst:.3e} over 100 states"),
    );
}

#[test]
fn criterion_02_closed_form_aux() {
    let mut worst_gamma: f64 = 0.0;
    let mut dominated = true;
    for seed in 0..50u64 {
        let scn = desk(3_000 + seed);
        let (ris, w) = random_state(&scn, 4_000 + seed);
        let gamma = update_gamma(&scn, &ris, &w);
        for k in 0..scn.n_users() {
            let s = sinr(&scn, &ris, &w, k);
            worst_gamma = worst_gamma.max((gamma[k] - s).abs() / s.max(1e-300));
        }
        let tau = update_tau(&scn, &ris, &w, &gamma);
        let aux = AuxState { gamma: gamma.clone(), tau: tau.clone() };
        let base = ris_optim::sumrate::surrogate_g(&scn, &ris, &w, &aux);
        let mut rng = stream_rng(5_000 + seed, 9);
        for _ in 0..100 {
            let mut eta: Vec<C64> = (0..tau.len())
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let norm: f64 = eta.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for e in &mut eta {
                *e *= C64::new(1e-4 / norm, 0.0);
            }
            let perturbed: Vec<C64> = tau.iter().zip(&eta).map(|(t, e)| t + e).collect();
            let probed = ris_optim::sumrate::surrogate_g(
                &scn,
                &ris,
                &w,
                &AuxState { gamma: gamma.clone(), tau: perturbed },
            );
            if probed > base + 1e-12 * base.abs().max(1.0) {
                dominated = false;
            }
        }
    }
    report(
        "criterion 02 closed-form aux",
        worst_gamma <= 1e-12 && dominated,
        &format!("worst gamma gap {worst_gamma:.3e}; tau dominates perturbations: {dominated}"),
    );
}

#[test]
fn criterion_03_manifold_grid_oracle() {
    // Exhaustive 1e-3-radian grid over both phases, evaluated through
    // difference-angle tables so the 39.5M-point sweep stays fast.
    let n_grid: usize = (std::f64::consts::TAU / 1e-3).ceil() as usize; // 6284
    let mut rng = stream_rng(42, 11);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..20 {
        let a = CMat::from_fn(2, 2, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let b = &a * a.adjoint();
        let c = CVec::from_fn(2, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });

        // f(i, j) = const + 2 Re{B12 e^{i(th_j - th_i)}} - 2 Re{c1 e^{-i th_i}}
        //           - 2 Re{c2 e^{-i th_j}}.
        let constant = b[(0, 0)].re + b[(1, 1)].re;
        let b12 = b[(0, 1)];
        let mut cross = vec![0.0f64; n_grid];
        let mut lin1 = vec![0.0f64; n_grid];
        let mut lin2 = vec![0.0f64; n_grid];
        for idx in 0..n_grid {
            let th = std::f64::consts::TAU * idx as f64 / n_grid as f64;
            let e = C64::new(th.cos(), th.sin());
            cross[idx] = 2.0 * (b12 * e).re;
            lin1[idx] = -2.0 * (c[0] * e.conj()).re;
            lin2[idx] = -2.0 * (c[1] * e.conj()).re;
        }
        let mut grid_min = f64::INFINITY;
        let mut arg = (0usize, 0usize);
        for i in 0..n_grid {
            let base = constant + lin1[i];
            for j in 0..n_grid {
                let diff = if j >= i { j - i } else { j + n_grid - i };
                let v = base + cross[diff] + lin2[j];
                if v < grid_min {
                    grid_min = v;
                    arg = (i, j);
                }
            }
        }

        // Algorithm 1 from a coarse-grid start (128 x 128).
        let coarse = 128usize;
        let mut best = (f64::INFINITY, 0.0f64, 0.0f64);
        let obj = QuadraticObjective { b: &b, c: &c };
        for i in 0..coarse {
            for j in 0..coarse {
                let t1 = std::f64::consts::TAU * i as f64 / coarse as f64;
                let t2 = std::f64::consts::TAU * j as f64 / coarse as f64;
                let phi = CVec::from_vec(vec![
                    C64::new(t1.cos(), t1.sin()),
                    C64::new(t2.cos(), t2.sin()),
                ]);
                let v = obj.value(&phi);
                if v < best.0 {
                    best = (v, t1, t2);
                }
            }
        }
        let phi0 = CirclePoint::new(CVec::from_vec(vec![
            C64::new(best.1.cos(), best.1.sin()),
            C64::new(best.2.cos(), best.2.sin()),
        ]))
        .unwrap();
        let params = ManifoldParams {
            rel_tol: 1e-14,
            max_iter: 5_000,
            ..ManifoldParams::for_quadratic(&b)
        };
        let (opt, _) = minimize_quadratic_on_circles(&b, &c, &phi0, &params).unwrap();
        let algo = obj.value(&opt.phi);
        worst = worst.max(algo - grid_min);
        let _ = arg;
    }
    report(
        "criterion 03 manifold grid oracle",
        worst <= 1e-3,
        &format!("worst objective excess over the 1e-3-rad grid: {worst:.3e}"),
    );
}

#[test]
fn criterion_04_amplitude_grid_oracle() {
    let mut worst: f64 = f64::NEG_INFINITY;
    // Sum-rate track: exact per-element quadratic-plus-root objective.
    for seed in 0..10u64 {
        let scn = desk(6_000 + seed);
        let (ris, w) = random_state(&scn, 7_000 + seed);
        let aux = optimal_aux(&scn, &ris, &w);
        let quads = build_varsigma_quadratics(&scn, &ris, &w, &aux);
        for m in 0..scn.n_elements() {
            let (a, c, r, t) = varsigma_element_coefficients(&quads, &ris.varsigma, m);
            let got = varsigma_scalar_min(a, c, r, t, 1e-6);
            let got_val = varsigma_scalar_objective(a, c, r, t, got);
            let mut grid_best = f64::INFINITY;
            for i in 0..=10_000usize {
                grid_best =
                    grid_best.min(varsigma_scalar_objective(a, c, r, t, i as f64 * 1e-4));
            }
            let scale = grid_best.abs().max(1.0);
            worst = worst.max((got_val - grid_best) / scale);
        }
    }
    // Power-minimization track: smoothed QoS-balance composite.
    for seed in 0..10u64 {
        let scn = desk(8_000 + seed);
        let targets = scn.config.sinr_targets.clone();
        let (ris, w) = random_state(&scn, 9_000 + seed);
        let varpi = qos_state(&scn, &ris, &w, &targets).varpi;
        let obj = VarsigmaBalanceObjective::new(&scn, &ris, &w, &targets, varpi, 1e-3);
        for m in 0..scn.n_elements() {
            let f = |x: f64| obj.value_with_element(&ris.varsigma, m, x);
            let got = f(min_scalar_on_unit_interval(&f, 16)).min(f(ris.varsigma[m]));
            let mut grid_best = f64::INFINITY;
            for i in 0..=10_000usize {
                grid_best = grid_best.min(f(i as f64 * 1e-4));
            }
            let scale = grid_best.abs().max(1.0);
            worst = worst.max((got - grid_best) / scale);
        }
    }
    report(
        "criterion 04 amplitude grid oracle",
        worst <= 1e-3,
        &format!("worst per-element objective excess {worst:.3e} (both problems)"),
    );
}

/// Multi-stage feasibility-respecting grid refinement; exact for convex
/// problems because each stage brackets the optimum of the previous one.
fn convex_grid_min(problem: &QcqpProblem, radius: f64) -> f64 {
    let n = problem.n_real();
    let feasible = |x: &RVec| problem.violations(x).iter().all(|v| *v <= 0.0);
    let mut center = RVec::zeros(n);
    let mut half_width = radius;
    let mut best = f64::INFINITY;
    for (stage, step) in [0.05_f64, 0.01, 1e-3].iter().enumerate() {
        let span = if stage == 0 { radius } else { half_width };
        let points_per_axis = (2.0 * span / step).ceil() as usize + 1;
        let mut best_point = center.clone();
        let mut local_best = f64::INFINITY;
        let mut idx = vec![0usize; n];
        loop {
            let x = RVec::from_fn(n, |d, _| {
                center[d] - span + idx[d] as f64 * step
            });
            if feasible(&x) {
                let v = problem.objective_at(&x);
                if v < local_best {
                    local_best = v;
                    best_point = x;
                }
            }
            // odometer
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < points_per_axis {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == n {
                    break;
                }
            }
            if d == n {
                break;
            }
        }
        best = local_best;
        center = best_point;
        half_width = 2.0 * step;
    }
    best
}

#[test]
fn criterion_05_qcqp_grid_oracle() {
    let mut rng = stream_rng(43, 12);
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let mut worst_kkt: f64 = 0.0;
    for trial in 0..50usize {
        let n = 2 + (trial % 2); // mix of 2- and 3-dimensional instances
        let radius = 1.5f64;
        let mut p = QcqpProblem::new_real(n);
        let a = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let pm = &a * a.transpose() + RMat::identity(n, n) * 0.2;
        let q = RVec::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        p.set_objective_real(pm, q, 0.0).unwrap();
        p.add_quad_real(RMat::identity(n, n) * 2.0, RVec::zeros(n), radius * radius)
            .unwrap();
        for _ in 0..2 {
            let b = RMat::from_fn(n, n, |_, _| rng.random_range(-0.7..0.7));
            let c = &b * b.transpose() + RMat::identity(n, n) * 0.05;
            let l = RVec::from_fn(n, |_, _| rng.random_range(-0.3..0.3));
            p.add_quad_real(c, l, rng.random_range(0.5..2.0)).unwrap();
        }
        let sol = solve_qcqp(&p, 1e-8, 800).unwrap();
        assert_eq!(sol.status, QcqpStatus::Optimal, "trial {trial}");
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        let grid = convex_grid_min(&p, radius);
        worst_gap = worst_gap.max((sol.objective - grid).abs());
    }
    report(
        "criterion 05 qcqp grid oracle",
        worst_gap <= 1e-3 && worst_kkt <= 1e-8,
        &format!("worst |objective - grid| {worst_gap:.3e}; worst KKT residual {worst_kkt:.3e}"),
    );
}

#[test]
fn criterion_06_sumrate_monotone_feasible() {
    let failures: Vec<String> = (0..50u64)
        .into_par_iter()
        .filter_map(|seed| {
            let scn = desk(10_000 + seed);
            let (_, _, trace) =
                run_sum_rate(&scn, &SumRateParams::default(), Mode::Op).ok()?;
            let rates = trace.objectives();
            for pair in rates.windows(2) {
                if pair[1] < pair[0] - 1e-5 * pair[1].abs().max(1e-300) {
                    return Some(format!("seed {seed}: rate fell {} -> {}", pair[0], pair[1]));
                }
            }
            for rec in &trace.iterations {
                let c = &rec.constraints;
                let ok = c.bs_power_slack >= -1e-8
                    && c.ris_power_slack >= -1e-8
                    && c.per_element_slack.iter().all(|s| *s >= -1e-8)
                    && c.unit_modulus_residual <= 1e-8
                    && c.varsigma_range_violation <= 1e-8;
                if !ok {
                    return Some(format!("seed {seed}: constraints broken at it {}", rec.iteration));
                }
            }
            None
        })
        .collect();
    report(
        "criterion 06 sum-rate monotonicity + feasibility",
        failures.is_empty(),
        &format!("50 seeds; failures: {failures:?}"),
    );
}

#[test]
fn criterion_07_convergence_envelope() {
    // delta < 1e-4 within 80 outer iterations, paper-default preset, both
    // problems, at least 9 of 10 seeds.
    let seeds: Vec<u64> = (1..=10).collect();
    let sum_params = SumRateParams { max_outer: 80, ..Default::default() };
    let pow_params = PowMinParams { max_outer: 80, ..Default::default() };
    let results: Vec<(u64, bool, f64, bool, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let scn = build_scenario(&ScenarioConfig::paper_default().with_seed(seed)).unwrap();
            let (sr_ok, sr_delta) = match run_sum_rate(&scn, &sum_params, Mode::Op) {
                Ok((_, _, tr)) => {
                    (tr.converged, tr.iterations.last().map(|r| r.delta).unwrap_or(f64::NAN))
                }
                Err(_) => (false, f64::NAN),
            };
            let (pm_ok, pm_delta) =
                match run_power_min(&scn, &scn.config.sinr_targets, &pow_params) {
                    Ok((_, _, tr)) => {
                        (tr.converged, tr.iterations.last().map(|r| r.delta).unwrap_or(f64::NAN))
                    }
                    Err(_) => (false, f64::NAN),
                };
            (seed, sr_ok, sr_delta, pm_ok, pm_delta)
        })
        .collect();
    let sr_pass = results.iter().filter(|r| r.1).count();
    let pm_pass = results.iter().filter(|r| r.3).count();
    for (seed, sr_ok, sr_d, pm_ok, pm_d) in &results {
        println!(
            "  seed {seed}: sumrate converged={sr_ok} (final delta {sr_d:.2e}), powmin converged={pm_ok} (final delta {pm_d:.2e})"
        );
    }
    report(
        "criterion 07 convergence envelope",
        sr_pass >= 9 && pm_pass >= 9,
        &format!("sumrate {sr_pass}/10, powmin {pm_pass}/10 seeds under delta<1e-4 within 80 iterations"),
    );
}

#[test]
fn criterion_08_mode_dominance() {
    let params = SumRateParams::default();
    let rates: Vec<(f64, f64, f64)> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let scn = desk(20_000 + seed);
            let op = run_sum_rate(&scn, &params, Mode::Op).unwrap().2.final_objective().unwrap();
            let ep = run_sum_rate(&scn, &params, Mode::Ep).unwrap().2.final_objective().unwrap();
            let sd = run_sum_rate(&scn, &params, Mode::Sd).unwrap().2.final_objective().unwrap();
            (op, ep, sd)
        })
        .collect();
    let mean_op = mean(&rates.iter().map(|r| r.0).collect::<Vec<_>>());
    let mean_ep = mean(&rates.iter().map(|r| r.1).collect::<Vec<_>>());
    let mean_sd = mean(&rates.iter().map(|r| r.2).collect::<Vec<_>>());
    report(
        "criterion 08 mode dominance",
        mean_op >= mean_ep && mean_op >= mean_sd,
        &format!("mean sum rate over 200 seeds: OP {mean_op:.4}, EP {mean_ep:.4}, SD {mean_sd:.4}"),
    );
}

#[test]
fn criterion_09_trend_reproduction() {
    let trials = 50u64;
    let sum_params = SumRateParams::default();
    let pow_params = PowMinParams::default();

    // Sum rate strictly increasing in the BS power budget.
    let pt_means: Vec<f64> = [4.0, 8.0, 12.0, 16.0]
        .iter()
        .map(|&dbm| {
            let rates: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut cfg = ScenarioConfig::desk().with_seed(30_000 + t);
                    cfg.budget_bs = dbm_to_watts(dbm);
                    let scn = build_scenario(&cfg).unwrap();
                    run_sum_rate(&scn, &sum_params, Mode::Op)
                        .unwrap()
                        .2
                        .final_objective()
                        .unwrap()
                })
                .collect();
            mean(&rates)
        })
        .collect();
    let pt_up = pt_means.windows(2).all(|w| w[1] > w[0]);

    // Sum rate strictly increasing in the element count.
    let m_means: Vec<f64> = [8usize, 16, 32]
        .iter()
        .map(|&m| {
            let rates: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut cfg = ScenarioConfig::desk().with_seed(31_000 + t);
                    cfg.n_elements = m;
                    cfg.budget_element = 2.0 * cfg.budget_ris / m as f64;
                    let scn = build_scenario(&cfg).unwrap();
                    run_sum_rate(&scn, &sum_params, Mode::Op)
                        .unwrap()
                        .2
                        .final_objective()
                        .unwrap()
                })
                .collect();
            mean(&rates)
        })
        .collect();
    let m_up = m_means.windows(2).all(|w| w[1] > w[0]);

    // Total power strictly increasing in the SINR requirement.
    let g_means: Vec<f64> = [4.0, 8.0, 12.0]
        .iter()
        .map(|&db| {
            let powers: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut cfg = ScenarioConfig::desk().with_seed(32_000 + t);
                    cfg.sinr_targets = vec![db_to_linear(db); cfg.n_users];
                    let scn = build_scenario(&cfg).unwrap();
                    run_power_min(&scn, &scn.config.sinr_targets, &pow_params)
                        .unwrap()
                        .2
                        .final_objective()
                        .unwrap()
                })
                .collect();
            mean(&powers)
        })
        .collect();
    let g_up = g_means.windows(2).all(|w| w[1] > w[0]);

    report(
        "criterion 09 trend reproduction",
        pt_up && m_up && g_up,
        &format!("P_T sweep {pt_means:?}; M sweep {m_means:?}; gamma sweep {g_means:?}"),
    );
}

#[test]
fn criterion_10_powmin_constraints() {
    let params = PowMinParams::default();
    let failures: Vec<String> = (0..50u64)
        .into_par_iter()
        .filter_map(|seed| {
            let scn = desk(40_000 + seed);
            let targets = scn.config.sinr_targets.clone();
            let (ris, w, trace) = match run_power_min(&scn, &targets, &params) {
                Ok(r) => r,
                Err(e) => return Some(format!("seed {seed}: solver error {e}")),
            };
            for k in 0..scn.n_users() {
                let s = sinr(&scn, &ris, &w, k);
                if s < targets[k] * (1.0 - 1e-6) {
                    return Some(format!("seed {seed}: user {k} SINR {s} < target"));
                }
            }
            let wa: Vec<f64> =
                trace.iterations.iter().map(|r| r.power_after_wa.unwrap()).collect();
            for pair in wa.windows(2) {
                if pair[1] > pair[0] * (1.0 + 1e-8) {
                    return Some(format!(
                        "seed {seed}: W/A power rose {} -> {}",
                        pair[0], pair[1]
                    ));
                }
            }
            None
        })
        .collect();
    report(
        "criterion 10 power-min constraint maintenance",
        failures.is_empty(),
        &format!("50 seeds; failures: {failures:?}"),
    );
}

#[test]
fn criterion_11_lse_gradient_checks() {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut cfg = ScenarioConfig::desk().with_seed(50_000 + seed);
        cfg.n_elements = 4;
        cfg.budget_element = 2.0 * cfg.budget_ris / 4.0;
        let scn = build_scenario(&cfg).unwrap();
        let targets = scn.config.sinr_targets.clone();
        let (ris, w) = random_state(&scn, 51_000 + seed);
        let q = qos_state(&scn, &ris, &w, &targets);
        let side = if seed % 2 == 0 { Side::Reflect } else { Side::Transmit };
        let varpi = if side == Side::Reflect { q.varpi_r } else { q.varpi_t };
        let obj = LsePhaseObjective::new(&scn, &ris, &w, &targets, side, varpi, 1e-3);
        let phi = if side == Side::Reflect { ris.phi_r.clone() } else { ris.phi_t.clone() };
        let grad = obj.gradient(&phi);
        let scale = grad.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1e-300);
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
                worst = worst.max((fd - analytic).abs() / scale);
            }
        }
    }
    report(
        "criterion 11 lse gradient checks",
        worst <= 1e-5,
        &format!("worst relative FD mismatch {worst:.3e} over 20 instances"),
    );
}
