//! Channel-model sanity: deterministic regeneration and the second-moment
//! property of the Rician/Rayleigh draws.
//!
//! ```bash
//! cargo run --release --example channel_monte_carlo
//! ```

use ris_optim::scenario::{
    build_scenario, path_loss, rician_channel, stream_rng, LosGeometry, ScenarioConfig,
};

fn main() -> ris_optim::Result<()> {
    let cfg = ScenarioConfig::desk().with_seed(42);
    let a = build_scenario(&cfg)?;
    let b = build_scenario(&cfg)?;
    println!("regeneration bit-identical: {}", a.g == b.g && a.h_d == b.h_d && a.h_r == b.h_r);

    // Empirical E|entry|^2 against the configured path loss.
    let pl = path_loss(cfg.bs_ris_distance, cfg.exponent_bs_ris, cfg.pathloss_ref_gain, cfg.pathloss_ref_distance)?;
    let mut rng = stream_rng(42, 999);
    let mut acc = 0.0;
    let mut count = 0usize;
    for _ in 0..100 {
        let h = rician_channel(40, 30, cfg.rician_factor, pl, LosGeometry { aod: 0.0, aoa: 0.0 }, &mut rng)?;
        acc += h.iter().map(|z| z.norm_sqr()).sum::<f64>();
        count += h.len();
    }
    let mean = acc / count as f64;
    println!(
        "second moment: {:.4e} vs path loss {:.4e} ({:+.2}% over {} samples)",
        mean,
        pl,
        100.0 * (mean - pl) / pl,
        count
    );

    println!("user partition: reflect {:?}, transmit {:?}", a.set_r, a.set_t);
    Ok(())
}
