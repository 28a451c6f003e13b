//! Single sum-rate maximization run on the desk preset.
//!
//! ```bash
//! cargo run --release --example sum_rate_solve
//! ```

use ris_optim::model::{check_constraints, sinr};
use ris_optim::scenario::{build_scenario, Mode, ScenarioConfig};
use ris_optim::sumrate::{run_sum_rate, SumRateParams};

fn main() -> ris_optim::Result<()> {
    let cfg = ScenarioConfig::desk().with_seed(7);
    let scn = build_scenario(&cfg)?;
    let params = SumRateParams::default();

    let (ris, w, trace) = run_sum_rate(&scn, &params, Mode::Op)?;

    println!("outer iterations : {}", trace.n_iterations());
    println!("converged        : {}", trace.converged);
    println!("sum rate         : {:.4} bits/s/Hz", trace.final_objective().unwrap());
    for k in 0..scn.n_users() {
        let side = if scn.is_reflect_user(k) { "reflect" } else { "transmit" };
        println!("  user {k} ({side:8}): SINR {:.2} dB", 10.0 * sinr(&scn, &ris, &w, k).log10());
    }

    let report = check_constraints(&scn, &ris, &w, &cfg.sinr_targets);
    println!("BS power slack   : {:+.3e} W", report.bs_power_slack);
    println!("RIS power slack  : {:+.3e} W", report.ris_power_slack);
    println!(
        "element slack    : min {:+.3e} W",
        report.per_element_slack.iter().cloned().fold(f64::INFINITY, f64::min)
    );

    // First few rows of the convergence trace, as written by the CLI.
    for line in trace.to_csv().lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
