//! Fit a small transition model on slide-world data, save a checkpoint, and
//! show predicted next object states with and without contact.
//!
//! `cargo run --release --example fit_model`

use cai_lab::detect::{collect_dataset, split_by_episode, CollectConfig};
use cai_lab::env::SlideParams;
use cai_lab::model::{ModelConfig, TransitionBatch, TransitionModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cai_lab::Result<()> {
    let params = SlideParams::default();
    let data = collect_dataset(&params, &CollectConfig { episodes: 200, ..CollectConfig::default() }, 0)?;
    let config = ModelConfig { hidden: vec![64, 64], max_epochs: 200, ..ModelConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (train, val) = split_by_episode(&data.records, 0.1, &mut rng);
    let train = TransitionBatch::from_records(&train, &config)?;
    let val = TransitionBatch::from_records(&val, &config)?;
    let mut model = TransitionModel::new(config, 0)?;
    let report = model.fit_with(&train, &val, &mut rng, |e, mse| println!("epoch {e:>4} val mse {mse:.3e}"))?;
    println!("best epoch {}", report.best_epoch);

    let touching = [0.42, 0.0, 0.47, 0.0];
    let far = [0.1, 0.0, 0.47, 0.0];
    for (name, s) in [("touching", touching), ("far", far)] {
        for a in [-1.0, 1.0] {
            let p = model.predict(&s, &[a])?;
            println!("{name:<8} a {a:+}: object delta mean {:+.4} {:+.4}", p.mean()[0], p.mean()[1]);
        }
    }
    let path = std::env::temp_dir().join("cai_lab_model.json");
    model.save(&path)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
