//! Rank-based episode priorities from total influence, checked against
//! sampled episode frequencies.
//!
//! `cargo run --release --example prioritized_replay`

use cai_lab::env::{Goal, SlideState};
use cai_lab::rl::{rank_probabilities, Episode, ReplayBuffer, SampleConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cai_lab::Result<()> {
    let totals = [5.0, 1.0, 3.0, 0.5, 8.0];
    let p = rank_probabilities(&totals)?;
    let s = SlideState { agent_pos: 0.1, agent_vel: 0.0, obj_pos: 0.45, obj_vel: 0.0 };
    let mut buffer = ReplayBuffer::new(totals.len())?;
    for (i, t) in totals.iter().enumerate() {
        buffer.push(Episode {
            id: i as u64,
            goal: Goal { center: 0.8, halfwidth: 0.05 },
            states: vec![s; 3],
            actions: vec![0.0; 2],
            scores: Some(vec![t / 2.0; 2]),
        })?;
    }
    let cfg = SampleConfig { her_prob: 0.8, prioritized: true, bonus_lambda: 0.0, max_bonus: 2.0 };
    let n = 100_000;
    let mut counts = vec![0usize; totals.len()];
    for tr in buffer.sample_batch(n, &cfg, &mut ChaCha8Rng::seed_from_u64(0))? {
        counts[tr.episode] += 1;
    }
    println!("total  priority  sampled");
    for ((t, p), c) in totals.iter().zip(&p).zip(&counts) {
        println!("{t:<5}  {p:.4}    {:.4}", *c as f64 / n as f64);
    }
    Ok(())
}
