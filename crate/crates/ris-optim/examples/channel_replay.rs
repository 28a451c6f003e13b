//! Export a scenario's channels to JSON and replay the exact run from the
//! dump (the `[re, im]` pair convention used by all state files).
//!
//! ```bash
//! cargo run --release --example channel_replay
//! ```

use ris_optim::scenario::{build_scenario, Scenario, ScenarioConfig};
use ris_optim::sumrate::{run_sum_rate, SumRateParams};
use ris_optim::Mode;

fn main() -> ris_optim::Result<()> {
    let cfg = ScenarioConfig::desk().with_seed(9);
    let scn = build_scenario(&cfg)?;

    let json = serde_json::to_string(&scn.to_dump())?;
    println!("dump size: {} bytes", json.len());

    let replayed = Scenario::from_dump(&serde_json::from_str(&json)?)?;
    println!("channels identical after replay: {}", scn.g == replayed.g);

    let params = SumRateParams { max_outer: 10, ..Default::default() };
    let (_, _, a) = run_sum_rate(&scn, &params, Mode::Op)?;
    let (_, _, b) = run_sum_rate(&replayed, &params, Mode::Op)?;
    println!(
        "same trajectory: {} (final {:.12} vs {:.12})",
        a.objectives() == b.objectives(),
        a.final_objective().unwrap(),
        b.final_objective().unwrap()
    );
    Ok(())
}
