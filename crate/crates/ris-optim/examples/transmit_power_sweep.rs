//! Miniature version of the sum-rate-versus-transmit-power experiment:
//! a few trials per budget point, means printed as a table.
//!
//! ```bash
//! cargo run --release --example transmit_power_sweep
//! ```

use ris_optim::scenario::{build_scenario, dbm_to_watts, Mode, ScenarioConfig};
use ris_optim::sumrate::{run_sum_rate, SumRateParams};

fn main() -> ris_optim::Result<()> {
    let trials = 10u64;
    let params = SumRateParams::default();
    println!("P_T [dBm]  mean sum rate [bits/s/Hz]  ({trials} trials each)");
    for dbm in [4.0, 8.0, 12.0, 16.0] {
        let mut total = 0.0;
        for t in 0..trials {
            let mut cfg = ScenarioConfig::desk().with_seed(100 + t);
            cfg.budget_bs = dbm_to_watts(dbm);
            let scn = build_scenario(&cfg)?;
            let (_, _, trace) = run_sum_rate(&scn, &params, Mode::Op)?;
            total += trace.final_objective().unwrap();
        }
        println!("{dbm:9.1}  {:.4}", total / trials as f64);
    }
    Ok(())
}
