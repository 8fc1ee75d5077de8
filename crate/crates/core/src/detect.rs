//! Labeled slide-world datasets and binary detection metrics for influence scores.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cai::{score_both, CaiConfig, PredictiveModel};
use crate::data::{derive_seed, TransitionRecord};
use crate::env::{add_observation_noise, rollout, Policy, RandomPolicy, ScriptedPolicy, SlideParams};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    RandomPolicy,
    Scripted,
    /// First half random-policy episodes, second half noisy scripted episodes.
    Mixed,
    RlAgent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<TransitionRecord>,
    pub source: Source,
    pub noise_level: f64,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Result<Vec<bool>> {
        self.records
            .iter()
            .map(|r| r.label.ok_or(Error::InvalidArgument(format!("record {}/{} has no label", r.episode_id, r.step))))
            .collect()
    }

    pub fn positive_rate(&self) -> Result<f64> {
        let labels = self.labels()?;
        if labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        Ok(labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64)
    }
}

/// Roll out `policy` for `n_episodes`, recording every transition with its
/// ground-truth influence label and contact flag. Episode ids start at `first_id`.
pub fn collect(
    params: &SlideParams,
    policy: &mut dyn Policy,
    n_episodes: usize,
    first_id: u64,
    rng: &mut dyn rand::RngCore,
) -> Vec<TransitionRecord> {
    let mut out = Vec::with_capacity(n_episodes * params.episode_len);
    for e in 0..n_episodes {
        let ro = rollout(params, policy, rng);
        for t in 0..params.episode_len {
            let s = &ro.states[t];
            out.push(TransitionRecord {
                episode_id: first_id + e as u64,
                step: t as u32,
                s: s.to_vec(),
                a: vec![ro.actions[t]],
                s_next: ro.states[t + 1].to_vec(),
                goal: Some(ro.goal.center),
                label: Some(params.ground_truth_influence(s)),
                contact: Some(ro.contacts[t]),
            });
        }
    }
    out
}

/// Collection protocol for detection experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    pub episodes: usize,
    pub source: Source,
    /// Action noise std of the scripted policy.
    pub scripted_noise: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            source: Source::Mixed,
            scripted_noise: 0.1,
        }
    }
}

/// Collect a labeled dataset; deterministic per `seed`.
pub fn collect_dataset(params: &SlideParams, cfg: &CollectConfig, seed: u64) -> Result<LabeledDataset> {
    params.validate()?;
    if cfg.episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scripted = ScriptedPolicy::new(cfg.scripted_noise);
    let records = match cfg.source {
        Source::RandomPolicy => collect(params, &mut RandomPolicy, cfg.episodes, 0, &mut rng),
        Source::Scripted => collect(params, &mut scripted, cfg.episodes, 0, &mut rng),
        Source::Mixed => {
            let half = cfg.episodes / 2;
            let mut r = collect(params, &mut RandomPolicy, half, 0, &mut rng);
            r.extend(collect(params, &mut scripted, cfg.episodes - half, half as u64, &mut rng));
            r
        }
        Source::RlAgent => {
            return Err(Error::InvalidArgument("agent datasets are produced by the RL trainer".into()));
        }
    };
    Ok(LabeledDataset {
        records,
        source: cfg.source,
        noise_level: 0.0,
    })
}

/// Influence and entropy scores for every record's start state. Each state
/// draws its actions from a generator seeded by `(cfg.seed, episode, step)`,
/// so results do not depend on `workers`.
pub fn score_records<M: PredictiveModel + Sync>(
    model: &M,
    records: &[TransitionRecord],
    cfg: &CaiConfig,
    workers: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let score = |r: &TransitionRecord| -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r.episode_id, r.step as u64));
        score_both(model, &r.s, cfg, &mut rng)
    };
    let workers = workers.max(1).min(records.len().max(1));
    let pairs: Vec<(f64, f64)> = if workers == 1 {
        records.iter().map(score).collect::<Result<_>>()?
    } else {
        let chunk = records.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = records
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(score).collect::<Result<Vec<_>>>()))
                .collect();
            let mut all = Vec::with_capacity(records.len());
            for h in handles {
                all.extend(h.join().expect("scoring thread panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    Ok(pairs.into_iter().unzip())
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    check_dim(scores.len(), labels.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    Ok((pos, labels.len() as u64 - pos))
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Cumulative `(threshold, tp, fp)` after each group of tied scores, highest threshold first.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(f64, u64, u64)> {
    let idx = descending(scores);
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < idx.len() {
        let t = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == t {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((t, tp, fp));
    }
    out
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(score⁺ > score⁻) + ½ P(tie)`, with midranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("ROC AUC needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of the positives, kept integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j share the midrank (i+1+j)/2
        let twice_mid = (i + 1 + j) as u128;
        let npos = idx[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mid * npos;
        i = j;
    }
    let twice_u = twice_rank_sum - (pos as u128) * (pos as u128 + 1);
    Ok(twice_u as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Step-wise average precision `Σ (R_k − R_{k−1}) P_k`, one step per distinct score.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::MetricUndefined("average precision needs a positive"));
    }
    let mut ap = 0.0;
    let mut prev_tp = 0;
    for (_, tp, fp) in tie_groups(scores, labels) {
        if tp > prev_tp {
            ap += (tp - prev_tp) as f64 / pos as f64 * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestF1 {
    pub f1: f64,
    pub threshold: f64,
}

/// Best F1 over thresholds at observed scores (positive when `score ≥ t`);
/// the lowest threshold wins ties.
pub fn best_f1(scores: &[f64], labels: &[bool]) -> Result<BestF1> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::MetricUndefined("F1 needs a positive"));
    }
    let mut best = BestF1 {
        f1: -1.0,
        threshold: f64::INFINITY,
    };
    for (t, tp, fp) in tie_groups(scores, labels) {
        let f1 = (2 * tp) as f64 / (2 * tp + fp + (pos - tp)) as f64;
        if f1 >= best.f1 {
            best = BestF1 { f1, threshold: t };
        }
    }
    Ok(best)
}

/// ROC curve points `(fpr, tpr, threshold)`, starting at `(0, 0, +∞)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("ROC curve needs both classes"));
    }
    let mut pts = vec![(0.0, 0.0, f64::INFINITY)];
    pts.extend(
        tie_groups(scores, labels)
            .into_iter()
            .map(|(t, tp, fp)| (fp as f64 / neg as f64, tp as f64 / pos as f64, t)),
    );
    Ok(pts)
}

/// Precision–recall points `(recall, precision, threshold)`, highest threshold first.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::MetricUndefined("PR curve needs a positive"));
    }
    Ok(tie_groups(scores, labels)
        .into_iter()
        .map(|(t, tp, fp)| (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64, t))
        .collect())
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scorer: String,
    pub noise_level: f64,
    pub auc: f64,
    pub ap: f64,
    pub f1: f64,
    pub threshold: f64,
    pub n: usize,
    pub seed: u64,
}

impl MetricsRow {
    pub fn compute(scorer: &str, noise_level: f64, scores: &[f64], labels: &[bool], seed: u64) -> Result<Self> {
        let f1 = best_f1(scores, labels)?;
        Ok(Self {
            scorer: scorer.to_string(),
            noise_level,
            auc: roc_auc(scores, labels)?,
            ap: average_precision(scores, labels)?,
            f1: f1.f1,
            threshold: f1.threshold,
            n: scores.len(),
            seed,
        })
    }
}

/// Scores and metrics for both scorers on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cai: Vec<f64>,
    pub entropy: Vec<f64>,
    pub labels: Vec<bool>,
    pub rows: [MetricsRow; 2],
}

pub fn evaluate<M: PredictiveModel + Sync>(
    model: &M,
    dataset: &LabeledDataset,
    cfg: &CaiConfig,
    workers: usize,
) -> Result<Evaluation> {
    let labels = dataset.labels()?;
    let (cai, entropy) = score_records(model, &dataset.records, cfg, workers)?;
    let rows = [
        MetricsRow::compute("cai", dataset.noise_level, &cai, &labels, cfg.seed)?,
        MetricsRow::compute("entropy", dataset.noise_level, &entropy, &labels, cfg.seed)?,
    ];
    Ok(Evaluation {
        cai,
        entropy,
        labels,
        rows,
    })
}

/// Re-score the dataset with observation noise added at each level (labels
/// stay clean) and report metrics for both scorers per level.
pub fn noise_sweep<M: PredictiveModel + Sync>(
    model: &M,
    dataset: &LabeledDataset,
    levels: &[f64],
    cfg: &CaiConfig,
    noise_seed: u64,
    workers: usize,
) -> Result<Vec<MetricsRow>> {
    noise_sweep_with(model, dataset, levels, cfg, noise_seed, workers, |_| Ok(()))
}

/// [`noise_sweep`] with a callback receiving the full evaluation at each level.
pub fn noise_sweep_with<M: PredictiveModel + Sync>(
    model: &M,
    dataset: &LabeledDataset,
    levels: &[f64],
    cfg: &CaiConfig,
    noise_seed: u64,
    workers: usize,
    mut on_level: impl FnMut(&Evaluation) -> Result<()>,
) -> Result<Vec<MetricsRow>> {
    if levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("noise levels must be sorted ascending".into()));
    }
    let mut rows = Vec::new();
    for (i, &level) in levels.iter().enumerate() {
        let mut noisy = dataset.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise_seed, i as u64, level.to_bits()));
        add_observation_noise(&mut noisy.records, level, &mut rng)?;
        noisy.noise_level = dataset.noise_level + level;
        let eval = evaluate(model, &noisy, cfg, workers)?;
        on_level(&eval)?;
        rows.extend(eval.rows);
    }
    Ok(rows)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Curve dump with columns `curve, x, y, threshold`.
pub fn write_curves_csv(path: &Path, scorer: &str, scores: &[f64], labels: &[bool]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scorer", "curve", "x", "y", "threshold"])?;
    for (x, y, t) in roc_curve(scores, labels)? {
        w.write_record([scorer, "roc", &x.to_string(), &y.to_string(), &t.to_string()])?;
    }
    for (x, y, t) in pr_curve(scores, labels)? {
        w.write_record([scorer, "pr", &x.to_string(), &y.to_string(), &t.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Random subset split: returns `(first, second)` with `fraction` of the
/// records (by episode) in the second part.
pub fn split_by_episode(records: &[TransitionRecord], fraction: f64, rng: &mut impl Rng) -> (Vec<TransitionRecord>, Vec<TransitionRecord>) {
    use std::collections::BTreeSet;
    let episodes: BTreeSet<u64> = records.iter().map(|r| r.episode_id).collect();
    let held: BTreeSet<u64> = episodes.into_iter().filter(|_| rng.random::<f64>() < fraction).collect();
    records.iter().cloned().partition(|r| !held.contains(&r.episode_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        let ap = average_precision(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap();
        assert!((ap - 0.833_333_333_333_333_4).abs() < 1e-15);
        assert!(average_precision(&[0.1], &[false]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(best_f1(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap().f1, 1.0);
        // threshold 0.1 predicts all positive: P = 2/3, R = 1, F1 = 0.8
        let b = best_f1(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap();
        assert!((b.f1 - 0.8).abs() < 1e-15);
        assert_eq!(b.threshold, 0.1);
        let shifted = best_f1(&[5.9, 5.8, 5.1], &[true, false, true]).unwrap();
        assert_eq!(shifted.f1, b.f1);
    }

    #[test]
    fn label_swap_complements_auc() {
        let s = [0.3, 0.1, 0.7, 0.7, 0.2, 0.9];
        let l = [true, false, false, true, true, false];
        let swapped: Vec<bool> = l.iter().map(|x| !x).collect();
        let a = roc_auc(&s, &l).unwrap();
        let b = roc_auc(&s, &swapped).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collect_one_episode() {
        let p = SlideParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let recs = collect(&p, &mut RandomPolicy, 1, 0, &mut rng);
        assert_eq!(recs.len(), 30);
        assert!(recs.iter().all(|r| r.label.is_some() && r.contact.is_some()));
    }

    #[test]
    fn curves_are_monotone() {
        let s = [0.3, 0.1, 0.7, 0.7, 0.2, 0.9];
        let l = [true, false, false, true, true, false];
        let roc = roc_curve(&s, &l).unwrap();
        assert!(roc.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        assert_eq!(roc.last().unwrap().0, 1.0);
        let pr = pr_curve(&s, &l).unwrap();
        assert_eq!(pr.last().unwrap().0, 1.0);
    }
}
