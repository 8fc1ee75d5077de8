//! Command-line front end. Every command writes into one output directory
//! holding the resolved `config.toml` next to its artifacts.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{derive_seed, read_json, read_jsonl, write_json, write_jsonl, TransitionRecord};
use crate::detect::{
    collect_dataset, noise_sweep_with, score_records, split_by_episode, write_curves_csv, write_metrics_csv,
    LabeledDataset, Source,
};
use crate::error::{Error, Result};
use crate::model::{TransitionBatch, TransitionModel};
use crate::rl::{write_curve_csv, CurveRow, Trainer, Variant};

#[derive(Debug, Parser)]
#[command(name = "cailab", version, about = "Causal action influence: detection and influence-driven RL on the slide world")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key by dotted path, e.g. `model.hidden=[64,64]`.
    #[arg(long = "set", global = true, value_name = "K=V")]
    pub set: Vec<String>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out the collection policy and write a labeled JSONL dataset.
    Collect,
    /// Fit the transition model on a dataset; writes a checkpoint and an MSE log.
    TrainModel,
    /// Detection metrics for the influence score and the entropy baseline.
    EvalDetect,
    /// Per-transition influence and entropy scores of a dataset.
    Score,
    /// Run RL variants over seeds; writes learning curves and resumable snapshots.
    TrainRl {
        /// Comma-separated seeds, e.g. `0,1,2`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

/// Exit status for a failed command: 1 for usage or configuration, 2 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Parse arguments, run the command, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Resolve the configuration from file, `--set` overrides, and dedicated flags.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut overrides = cli.common.set.clone();
    if let Some(seed) = cli.common.seed {
        overrides.push(format!("seed={}", i64::try_from(seed).map_err(|_| Error::Config("seed exceeds i64".into()))?));
    }
    if let Some(out) = &cli.common.out {
        overrides.push(format!("out={}", toml::Value::String(out.display().to_string())));
    }
    if let Some(w) = cli.common.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Command::TrainRl { seeds } = &cli.command {
        if !seeds.is_empty() {
            let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
            overrides.push(format!("run.seeds=[{}]", list.join(",")));
        }
    }
    ExperimentConfig::load(cli.common.config.as_deref(), &overrides)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    cfg.write_snapshot(&cfg.out)?;
    match cli.command {
        Command::Collect => cmd_collect(&cfg),
        Command::TrainModel => cmd_train_model(&cfg),
        Command::EvalDetect => cmd_eval_detect(&cfg),
        Command::Score => cmd_score(&cfg),
        Command::TrainRl { .. } => cmd_train_rl(&cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: Source,
    pub seed: u64,
    pub episodes: usize,
    pub records: usize,
    pub positives: usize,
    pub positive_rate: f64,
}

pub fn cmd_collect(cfg: &ExperimentConfig) -> Result<()> {
    let data = collect_dataset(&cfg.env, &cfg.collect, cfg.seed)?;
    let labels = data.labels()?;
    let positives = labels.iter().filter(|&&l| l).count();
    write_jsonl(&cfg.out.join("dataset.jsonl"), &data.records)?;
    let manifest = Manifest {
        source: data.source,
        seed: cfg.seed,
        episodes: cfg.collect.episodes,
        records: data.len(),
        positives,
        positive_rate: data.positive_rate()?,
    };
    write_json(&cfg.out.join("manifest.json"), &manifest)?;
    println!("collected {} transitions, positive rate {:.4}", manifest.records, manifest.positive_rate);
    Ok(())
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::Config(format!("{key} is required for this command")))
}

/// Load a JSONL dataset, taking its source from a sibling `manifest.json` when present.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let records: Vec<TransitionRecord> = read_jsonl(path)?;
    let source = path
        .parent()
        .map(|d| d.join("manifest.json"))
        .filter(|m| m.exists())
        .map(|m| read_json::<Manifest>(&m).map(|m| m.source))
        .transpose()?
        .unwrap_or(Source::Mixed);
    Ok(LabeledDataset {
        records,
        source,
        noise_level: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LogRow {
    epoch: usize,
    val_mse: f64,
}

pub fn cmd_train_model(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_dataset(required(&cfg.train.dataset, "train.dataset")?)?;
    let mut model = match &cfg.train.resume {
        Some(p) => {
            let mut m = TransitionModel::load(p)?;
            if m.config().max_epochs < cfg.model.max_epochs {
                m = model_with_max_epochs(m, cfg.model.max_epochs)?;
            }
            m
        }
        None => TransitionModel::new(cfg.model.clone(), cfg.seed)?,
    };
    // the split depends only on the model's seed so a resumed run validates on the same episodes
    let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(model.seed(), 0, 0));
    let (train, val) = split_by_episode(&data.records, cfg.train.val_fraction, &mut split_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(model.seed(), 1, model.epochs_trained() as u64));
    let train = TransitionBatch::from_records(&train, model.config())?;
    let val = TransitionBatch::from_records(&val, model.config())?;
    let log_path = cfg.out.join("train_log.csv");
    let mut log = csv::Writer::from_path(&log_path)?;
    let report = model.fit(&train, &val, &mut rng)?;
    for &(epoch, val_mse) in &report.trace {
        log.serialize(LogRow { epoch, val_mse })?;
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    model.save(&cfg.out.join("model.json"))?;
    println!(
        "trained to epoch {} (best {} at mse {:.4e}{})",
        model.epochs_trained(),
        report.best_epoch,
        report.best_val_mse,
        if report.early_stopped { ", early stop" } else { "" }
    );
    Ok(())
}

fn model_with_max_epochs(model: TransitionModel, max_epochs: usize) -> Result<TransitionModel> {
    let mut ck = model.to_checkpoint();
    ck.config.max_epochs = max_epochs;
    TransitionModel::from_checkpoint(&ck)
}

pub fn cmd_eval_detect(cfg: &ExperimentConfig) -> Result<()> {
    let model = TransitionModel::load(required(&cfg.detect.model, "detect.model")?)?;
    let data = load_dataset(required(&cfg.detect.dataset, "detect.dataset")?)?;
    let mut levels = cfg.detect.noise_levels.clone();
    levels.sort_by(f64::total_cmp);
    let rows = noise_sweep_with(&model, &data, &levels, &cfg.cai, cfg.detect.noise_seed, cfg.workers, |eval| {
        if cfg.detect.write_curves {
            let tag = format!("{}", eval.rows[0].noise_level);
            write_curves_csv(&cfg.out.join(format!("curves_cai_noise{tag}.csv")), "cai", &eval.cai, &eval.labels)?;
            write_curves_csv(&cfg.out.join(format!("curves_entropy_noise{tag}.csv")), "entropy", &eval.entropy, &eval.labels)?;
        }
        Ok(())
    })?;
    write_metrics_csv(&cfg.out.join("metrics.csv"), &rows)?;
    for r in &rows {
        println!("{:<8} noise {:<5} auc {:.3} ap {:.3} f1 {:.3}", r.scorer, r.noise_level, r.auc, r.ap, r.f1);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoreRow {
    episode_id: u64,
    step: u32,
    cai: f64,
    entropy: f64,
    label: Option<bool>,
}

pub fn cmd_score(cfg: &ExperimentConfig) -> Result<()> {
    let model = TransitionModel::load(required(&cfg.detect.model, "detect.model")?)?;
    let data = load_dataset(required(&cfg.detect.dataset, "detect.dataset")?)?;
    let (cai, entropy) = score_records(&model, &data.records, &cfg.cai, cfg.workers)?;
    let path = cfg.out.join("scores.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for ((r, c), h) in data.records.iter().zip(cai).zip(entropy) {
        w.serialize(ScoreRow {
            episode_id: r.episode_id,
            step: r.step,
            cai: c,
            entropy: h,
            label: r.label,
        })?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("scored {} transitions", data.len());
    Ok(())
}

/// Snapshot path of one RL run inside `dir`.
pub fn snapshot_path(dir: &Path, variant: Variant, seed: u64) -> PathBuf {
    dir.join("runs").join(format!("{}_seed{seed}.json", variant.name()))
}

/// Fresh trainer, or the saved one when resuming; a saved run must match the
/// configuration except for its episode budget.
fn open_trainer(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<Trainer> {
    let path = snapshot_path(&cfg.out, variant, seed);
    if cfg.run.resume && path.exists() {
        let mut t: Trainer = read_json(&path)?;
        let mut saved = t.config.clone();
        saved.episodes = cfg.rl.episodes;
        if saved != cfg.rl || t.variant != variant || t.seed != seed {
            return Err(Error::Config(format!("{} was written with a different configuration", path.display())));
        }
        t.config.episodes = cfg.rl.episodes;
        Ok(t)
    } else {
        Trainer::new(cfg.rl.clone(), variant, seed)
    }
}

fn run_one(cfg: &ExperimentConfig, variant: Variant, seed: u64, threads: usize) -> Result<Vec<CurveRow>> {
    let mut trainer = open_trainer(cfg, variant, seed)?.with_workers(threads);
    let path = snapshot_path(&cfg.out, variant, seed);
    let every = cfg.run.snapshot_every;
    let mut evals = 0usize;
    trainer.run(|t| {
        evals += 1;
        let last = t.curve.last().expect("row just recorded");
        println!("{variant} seed {seed} episode {:>5} success {:.2}", last.episode, last.success_rate);
        if every > 0 && (evals.is_multiple_of(every) || t.done()) {
            write_json(&path, t)?;
        }
        Ok(())
    })?;
    write_json(&path, &trainer)?;
    Ok(trainer.curve)
}

pub fn cmd_train_rl(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(cfg.out.join("runs")).map_err(|e| Error::io(cfg.out.join("runs"), e))?;
    let jobs: Vec<(Variant, u64)> = cfg
        .run
        .variants
        .iter()
        .flat_map(|&v| cfg.rl_seeds().into_iter().map(move |s| (v, s)))
        .collect();
    let pool = cfg.workers.min(jobs.len()).max(1);
    // surplus threads go to rescoring inside each run
    let inner = (cfg.workers / pool).max(1);
    let results: Mutex<Vec<Option<Result<Vec<CurveRow>>>>> = Mutex::new(jobs.iter().map(|_| None).collect());
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..pool {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("job counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&(variant, seed)) = jobs.get(i) else { break };
                let r = run_one(cfg, variant, seed, inner);
                results.lock().expect("results")[i] = Some(r);
            });
        }
    });
    let mut rows = Vec::new();
    for r in results.into_inner().expect("results") {
        rows.extend(r.expect("every job ran")?);
    }
    write_curve_csv(&cfg.out.join("curve.csv"), &rows)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_map_to_usage_codes() {
        assert_eq!(main_with_args(["cailab", "bogus"]), 1);
        assert_eq!(main_with_args(["cailab", "collect", "--seed", "x"]), 1);
        assert_eq!(main_with_args(["cailab", "--help"]), 0);
    }

    #[test]
    fn flags_become_overrides() {
        let cli = Cli::try_parse_from(["cailab", "train-rl", "--seeds", "3,4", "--seed", "9", "--out", "/tmp/o", "--workers", "2"]).unwrap();
        let cfg = resolve(&cli).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out, PathBuf::from("/tmp/o"));
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.rl_seeds(), vec![3, 4]);
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Empty("x")), 2);
    }
}
