//! Train the transition model on mixed slide data and report how well the
//! influence score and the entropy baseline detect contact states.
//!
//! `cargo run --release --example detect_slide -- [seed] [max_epochs]`

use cai_lab::cai::CaiConfig;
use cai_lab::detect::{collect_dataset, evaluate, split_by_episode, CollectConfig};
use cai_lab::env::SlideParams;
use cai_lab::model::{ModelConfig, TransitionBatch, TransitionModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cai_lab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0);
    let max_epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let params = SlideParams::default();
    let collect = CollectConfig::default();
    let train_set = collect_dataset(&params, &collect, 2 * seed)?;
    let test_set = collect_dataset(&params, &collect, 2 * seed + 1)?;
    println!("train positive rate {:.3}", train_set.positive_rate()?);

    let config = ModelConfig {
        max_epochs,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, val) = split_by_episode(&train_set.records, 0.1, &mut rng);
    let train = TransitionBatch::from_records(&train, &config)?;
    let val = TransitionBatch::from_records(&val, &config)?;
    let mut model = TransitionModel::new(config, seed)?;
    let report = model.fit_with(&train, &val, &mut rng, |epoch, mse| println!("epoch {epoch:>4} val mse {mse:.3e}"))?;
    println!("best epoch {} (early stop: {})", report.best_epoch, report.early_stopped);

    let eval = evaluate(&model, &test_set, &CaiConfig::default(), 1)?;
    for row in &eval.rows {
        println!("{:<8} auc {:.3} ap {:.3} f1 {:.3}", row.scorer, row.auc, row.ap, row.f1);
    }
    Ok(())
}
