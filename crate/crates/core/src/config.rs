//! Declarative experiment configuration: a TOML file, dotted `key=value`
//! overrides, and a resolved snapshot written next to every run's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cai::CaiConfig;
use crate::detect::CollectConfig;
use crate::env::SlideParams;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rl::{RlConfig, Variant};

/// Model training: reads a dataset, writes `model.json` and `train_log.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub dataset: Option<PathBuf>,
    /// Share of episodes held out for early stopping.
    pub val_fraction: f64,
    /// Continue from this checkpoint instead of a fresh model.
    pub resume: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            dataset: None,
            val_fraction: 0.1,
            resume: None,
        }
    }
}

/// Detection evaluation and plain scoring of a labeled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectSection {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Observation-noise levels as fractions of each dimension's std.
    pub noise_levels: Vec<f64>,
    pub noise_seed: u64,
    pub write_curves: bool,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            model: None,
            dataset: None,
            noise_levels: vec![0.0],
            noise_seed: 0,
            write_curves: true,
        }
    }
}

/// RL experiment grid: every variant is run for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub variants: Vec<Variant>,
    /// Seeds to run; the top-level seed when empty.
    pub seeds: Vec<u64>,
    /// Pick up from snapshots left by an earlier, interrupted run.
    pub resume: bool,
    /// Write a snapshot after every this many evaluations (0 disables).
    pub snapshot_every: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            variants: vec![Variant::Baseline],
            seeds: Vec::new(),
            resume: true,
            snapshot_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub env: SlideParams,
    /// Dataset collection: `collect` writes `dataset.jsonl` and `manifest.json`.
    pub collect: CollectConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub cai: CaiConfig,
    pub detect: DetectSection,
    pub rl: RlConfig,
    pub run: RunSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/latest"),
            workers: 1,
            env: SlideParams::default(),
            collect: CollectConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            cai: CaiConfig::default(),
            detect: DetectSection::default(),
            rl: RlConfig::default(),
            run: RunSection::default(),
        }
    }
}

/// Parse an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `dotted.key` in `table` to `raw`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not KEY=VALUE")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?} descends into non-table {p:?}")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Build from an optional TOML file plus overrides. Unknown keys are errors.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.env.validate().map_err(cfg)?;
        self.model.validate().map_err(cfg)?;
        self.cai.validate().map_err(cfg)?;
        self.rl.validate().map_err(cfg)?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.train.val_fraction) {
            return Err(Error::Config("train.val_fraction must lie in [0, 1)".into()));
        }
        if self.detect.noise_levels.is_empty() || self.detect.noise_levels.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("detect.noise_levels must be non-empty and non-negative".into()));
        }
        if self.run.variants.is_empty() {
            return Err(Error::Config("run.variants must not be empty".into()));
        }
        Ok(())
    }

    /// Seeds of an RL grid.
    pub fn rl_seeds(&self) -> Vec<u64> {
        if self.run.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.run.seeds.clone()
        }
    }

    /// Write the resolved configuration as `config.toml` inside `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
