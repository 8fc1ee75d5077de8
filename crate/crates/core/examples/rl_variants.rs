//! Train one DDPG+HER variant on the slide world and print its learning curve.
//!
//! `cargo run --release --example rl_variants -- [variant] [seed] [episodes]`

use std::time::Instant;

use cai_lab::rl::{episodes_to_success, RlConfig, Trainer, Variant};

fn main() -> cai_lab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let variant: Variant = args.first().map_or(Ok(Variant::Baseline), |s| s.parse())?;
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let episodes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let config = RlConfig {
        episodes,
        ..RlConfig::default()
    };
    let start = Instant::now();
    let mut trainer = Trainer::new(config, variant, seed)?;
    let curve = trainer.run(|t| {
        let r = t.curve.last().expect("row just added");
        println!(
            "{:>5} success {:.2} cai {:>6} critic {:>8} [{:.0}s]",
            r.episode,
            r.success_rate,
            r.mean_cai.map_or("-".into(), |v| format!("{v:.3}")),
            r.critic_loss.map_or("-".into(), |v| format!("{v:.4}")),
            start.elapsed().as_secs_f64()
        );
        Ok(())
    })?;
    match episodes_to_success(&curve, 0.6) {
        Some(e) => println!("{variant} seed {seed}: 60% success after {e} episodes"),
        None => println!("{variant} seed {seed}: never reached 60%"),
    }
    Ok(())
}
