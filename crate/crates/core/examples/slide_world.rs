//! Roll out the scripted controller in the slide world and print each step
//! with its contact flag and ground-truth influence label.
//!
//! `cargo run --release --example slide_world -- [seed]`

use cai_lab::env::{rollout, ScriptedPolicy, SlideParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let params = SlideParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ro = rollout(&params, &mut ScriptedPolicy::new(0.0), &mut rng);
    println!("goal {:.3} ± {:.3}", ro.goal.center, ro.goal.halfwidth);
    println!(" t  agent   a_vel    object  o_vel    action  contact influence");
    for (t, s) in ro.states[..params.episode_len].iter().enumerate() {
        println!(
            "{t:>2}  {:.3}  {:+.4}  {:.3}   {:+.4}  {:+.3}  {:<7} {}",
            s.agent_pos,
            s.agent_vel,
            s.obj_pos,
            s.obj_vel,
            ro.actions[t],
            ro.contacts[t],
            params.ground_truth_influence(s)
        );
    }
    println!("success: {}", ro.success());
}
