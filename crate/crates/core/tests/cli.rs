//! End-to-end checks of the `cailab` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use cai_lab::cli::Manifest;
use cai_lab::data::{read_json, read_jsonl, write_jsonl, TransitionRecord};
use cai_lab::model::TransitionModel;

const TINY_MODEL: &str = r#"
[model]
hidden = [16, 16]
max_epochs = 4
eval_every = 1
patience = 100
batch_size = 64
"#;

const TINY_RL: &str = r#"
[rl]
episodes = 30
warmup_episodes = 20
eval_every = 10
eval_episodes = 10
buffer_episodes = 200
cai = { k = 8 }

[rl.agent]
hidden = [16, 16]
batch_size = 32
updates_per_episode = 4

[rl.model]
hidden = [16, 16]
batch_size = 64

[rl.schedule]
warmup_episodes = 20
warmup_batches = 30
every = 10
batches = 10
taper_after = 1000
batches_after_taper = 5
"#;

fn cailab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cailab")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = cailab(args);
    assert_eq!(code, 0, "{args:?}\n{stderr}");
    stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn collect(dir: &Path, name: &str, episodes: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    ok(&["collect", "--out", s(&out), "--seed", &seed.to_string(), "--set", &format!("collect.episodes={episodes}")]);
    out.join("dataset.jsonl")
}

#[test]
fn collect_writes_dataset_and_manifest_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let a = collect(tmp.path(), "a", 20, 3);
    let b = collect(tmp.path(), "b", 20, 3);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let records: Vec<TransitionRecord> = read_jsonl(&a).unwrap();
    assert_eq!(records.len(), 600);
    let manifest: Manifest = read_json(&tmp.path().join("a/manifest.json")).unwrap();
    let positives = records.iter().filter(|r| r.label == Some(true)).count();
    assert_eq!(manifest.records, 600);
    assert_eq!(manifest.positives, positives);
    assert_eq!(manifest.positive_rate, positives as f64 / 600.0);

    // re-running from the resolved snapshot reproduces the run
    let snap = tmp.path().join("a/config.toml");
    let c = tmp.path().join("c");
    ok(&["collect", "--config", s(&snap), "--out", s(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(c.join("dataset.jsonl")).unwrap());
}

#[test]
fn config_and_usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(cailab(&["collect", "--out", s(&out), "--set", "colect.episodes=3"]).0, 1);
    assert_eq!(cailab(&["collect", "--out", s(&out), "--set", "collect.episodes=0"]).0, 2);
    assert_eq!(cailab(&["collect", "--config", s(&tmp.path().join("none.toml"))]).0, 1);
    assert_eq!(cailab(&["train-model", "--out", s(&out)]).0, 1);
    assert_eq!(cailab(&["frobnicate"]).0, 1);
    assert_eq!(cailab(&["--help"]).0, 0);
    let missing = tmp.path().join("missing.jsonl");
    let (code, _, err) = cailab(&["train-model", "--out", s(&out), "--set", &format!("train.dataset='{}'", s(&missing))]);
    assert_eq!(code, 2);
    assert!(err.contains("missing.jsonl"), "{err}");
}

#[test]
fn train_model_logs_match_checkpoint_and_resume_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let data = collect(tmp.path(), "data", 20, 1);
    let cfg = write(tmp.path(), "m.toml", &format!("{TINY_MODEL}\n[train]\ndataset = '{}'\n", s(&data)));
    let first = tmp.path().join("first");
    ok(&["train-model", "--config", s(&cfg), "--out", s(&first)]);

    let log = |dir: &Path| -> Vec<(usize, f64)> {
        csv::Reader::from_path(dir.join("train_log.csv"))
            .unwrap()
            .deserialize::<(usize, f64)>()
            .map(Result::unwrap)
            .collect()
    };
    let rows = log(&first);
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    let model = TransitionModel::load(&first.join("model.json")).unwrap();
    let best = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    assert_eq!(model.best_val_mse(), Some(best));
    assert_eq!(model.epochs_trained(), 4);

    let second = tmp.path().join("second");
    let ck = first.join("model.json");
    ok(&[
        "train-model",
        "--config",
        s(&cfg),
        "--out",
        s(&second),
        "--set",
        "model.max_epochs=7",
        "--set",
        &format!("train.resume='{}'", s(&ck)),
    ]);
    assert_eq!(log(&second).iter().map(|r| r.0).collect::<Vec<_>>(), vec![5, 6, 7]);
    assert_eq!(TransitionModel::load(&second.join("model.json")).unwrap().epochs_trained(), 7);
}

#[test]
fn eval_detect_and_score_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let train = collect(tmp.path(), "train", 20, 1);
    let test = collect(tmp.path(), "test", 10, 2);
    let cfg = write(tmp.path(), "m.toml", &format!("{TINY_MODEL}\n[train]\ndataset = '{}'\n", s(&train)));
    let m = tmp.path().join("m");
    ok(&["train-model", "--config", s(&cfg), "--out", s(&m)]);
    let model = m.join("model.json");

    let ev = tmp.path().join("ev");
    let detect = [
        "--set".to_string(),
        format!("detect.model='{}'", s(&model)),
        "--set".to_string(),
        format!("detect.dataset='{}'", s(&test)),
        "--set".to_string(),
        "cai.k=8".to_string(),
    ];
    let mut args: Vec<&str> = vec!["eval-detect", "--out", s(&ev), "--set", "detect.noise_levels=[0.0, 0.1, 0.2]"];
    args.extend(detect.iter().map(String::as_str));
    ok(&args);
    let rows: Vec<cai_lab::detect::MetricsRow> =
        csv::Reader::from_path(ev.join("metrics.csv")).unwrap().deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for (pair, level) in rows.chunks(2).zip([0.0, 0.1, 0.2]) {
        assert_eq!((pair[0].scorer.as_str(), pair[1].scorer.as_str()), ("cai", "entropy"));
        assert!(pair.iter().all(|r| r.noise_level == level && r.auc.is_finite() && r.ap.is_finite()));
    }
    assert!(ev.join("curves_cai_noise0.csv").exists());
    assert!(ev.join("curves_entropy_noise0.2.csv").exists());

    let sc = tmp.path().join("sc");
    let mut args: Vec<&str> = vec!["score", "--out", s(&sc), "--workers", "3"];
    args.extend(detect.iter().map(String::as_str));
    ok(&args);
    let n = csv::Reader::from_path(sc.join("scores.csv")).unwrap().records().count();
    assert_eq!(n, 300);

    // a dataset with only one class cannot be evaluated
    let records: Vec<TransitionRecord> = read_jsonl(&test).unwrap();
    let neg = tmp.path().join("neg.jsonl");
    write_jsonl(&neg, records.into_iter().filter(|r| r.label == Some(false))).unwrap();
    let (code, _, _) = cailab(&[
        "eval-detect",
        "--out",
        s(&tmp.path().join("ev2")),
        "--set",
        &format!("detect.model='{}'", s(&model)),
        "--set",
        &format!("detect.dataset='{}'", s(&neg)),
        "--set",
        "cai.k=8",
    ]);
    assert_eq!(code, 2);
}

fn curve(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("curve.csv")).unwrap()
}

#[test]
fn train_rl_grid_is_keyed_by_variant_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "rl.toml", &format!("{TINY_RL}\n[run]\nvariants = ['baseline', 'cai_p']\n"));
    let one = tmp.path().join("one");
    ok(&["train-rl", "--config", s(&cfg), "--out", s(&one), "--seeds", "0,1"]);
    let rows: Vec<cai_lab::rl::CurveRow> =
        csv::Reader::from_path(one.join("curve.csv")).unwrap().deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 16);
    for (variant, seed) in [("baseline", 0), ("baseline", 1), ("cai_p", 0), ("cai_p", 1)] {
        let eps: Vec<usize> =
            rows.iter().filter(|r| r.variant.name() == variant && r.seed == seed).map(|r| r.episode).collect();
        assert_eq!(eps, vec![0, 10, 20, 30]);
    }
    assert!(rows.iter().all(|r| r.success_rate.is_finite()));

    // the worker count does not change results
    let four = tmp.path().join("four");
    ok(&["train-rl", "--config", s(&cfg), "--out", s(&four), "--seeds", "0,1", "--workers", "4"]);
    assert_eq!(curve(&one), curve(&four));
}

#[test]
fn interrupted_rl_run_resumes_without_duplicates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "rl.toml", &format!("{TINY_RL}\n[run]\nvariants = ['combined']\n"));
    let full = tmp.path().join("full");
    ok(&["train-rl", "--config", s(&cfg), "--out", s(&full)]);

    let part = tmp.path().join("part");
    ok(&["train-rl", "--config", s(&cfg), "--out", s(&part), "--set", "rl.episodes=10"]);
    ok(&["train-rl", "--config", s(&cfg), "--out", s(&part)]);
    assert_eq!(curve(&full), curve(&part));

    // a snapshot from another configuration is refused
    let (code, _, _) = cailab(&["train-rl", "--config", s(&cfg), "--out", s(&part), "--set", "rl.bonus_lambda=0.5"]);
    assert_eq!(code, 1);
}
