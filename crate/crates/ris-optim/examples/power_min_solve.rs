//! Total-power minimization under 12 dB SINR targets on the desk preset.
//!
//! ```bash
//! cargo run --release --example power_min_solve
//! ```

use ris_optim::model::{bs_power, ris_power, sinr};
use ris_optim::powmin::{feasibility_precheck, run_power_min, PowMinParams};
use ris_optim::scenario::{build_scenario, watts_to_dbm, ScenarioConfig};

fn main() -> ris_optim::Result<()> {
    let cfg = ScenarioConfig::desk().with_seed(7);
    let scn = build_scenario(&cfg)?;

    let rank = feasibility_precheck(&scn);
    println!("stacked channel rank {}/{} (full: {})", rank.rank, rank.required, rank.full_rank);

    let (ris, w, trace) = run_power_min(&scn, &cfg.sinr_targets, &PowMinParams::default())?;

    println!("outer iterations : {}", trace.n_iterations());
    println!("converged        : {}", trace.converged);
    let p = trace.final_objective().unwrap();
    println!("total power      : {:.4e} W ({:.2} dBm)", p, watts_to_dbm(p));
    println!("  BS part        : {:.4e} W", bs_power(&w));
    println!("  RIS part       : {:.4e} W", ris_power(&scn, &ris, &w));
    for k in 0..scn.n_users() {
        let achieved = sinr(&scn, &ris, &w, k);
        println!(
            "  user {k}: SINR {:.3} dB (target {:.3} dB)",
            10.0 * achieved.log10(),
            10.0 * cfg.sinr_targets[k].log10()
        );
    }
    Ok(())
}
