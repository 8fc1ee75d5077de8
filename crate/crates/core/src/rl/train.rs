use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, AgentConfig, UpdateStats};
use super::buffer::{observation, Episode, ReplayBuffer, SampleConfig};
use super::explore::{explore_action, ExploreConfig};
use crate::cai::{cai_score, CaiConfig};
use crate::data::derive_seed;
use crate::env::{achieved_goal, task_reward, SlideParams, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::model::{fit_online, ModelConfig, OnlineSchedule, TransitionBatch, TransitionModel};
use crate::nn::{AdamConfig, Init};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Bonus,
    Active,
    CaiP,
    Combined,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Baseline, Variant::Bonus, Variant::Active, Variant::CaiP, Variant::Combined];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Bonus => "bonus",
            Variant::Active => "active",
            Variant::CaiP => "cai_p",
            Variant::Combined => "combined",
        }
    }

    pub fn uses_bonus(self) -> bool {
        matches!(self, Variant::Bonus | Variant::Combined)
    }

    pub fn uses_active(self) -> bool {
        matches!(self, Variant::Active | Variant::Combined)
    }

    pub fn uses_priority(self) -> bool {
        matches!(self, Variant::CaiP | Variant::Combined)
    }

    pub fn uses_model(self) -> bool {
        self != Variant::Baseline
    }

    fn needs_scores(self) -> bool {
        self.uses_bonus() || self.uses_priority()
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Slide world used for control: as the default, but with enough object drag
/// that a struck object comes to rest within the episode.
pub fn rl_slide_params() -> SlideParams {
    SlideParams {
        drag: 0.9,
        ..SlideParams::default()
    }
}

fn rl_model_config() -> ModelConfig {
    ModelConfig {
        hidden: vec![64; 3],
        init: Init::Orthogonal,
        adam: AdamConfig::with_lr(1e-3),
        batch_size: 500,
        ..ModelConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub env: SlideParams,
    pub agent: AgentConfig,
    pub model: ModelConfig,
    pub schedule: OnlineSchedule,
    pub cai: CaiConfig,
    /// Training episodes after the random warmup.
    pub episodes: usize,
    pub warmup_episodes: usize,
    pub buffer_episodes: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub bonus_lambda: f64,
    pub max_bonus: f64,
    pub active_fraction: f64,
    /// Stop once an evaluation reaches this success rate.
    pub target_success: Option<f64>,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            env: rl_slide_params(),
            agent: AgentConfig::default(),
            model: rl_model_config(),
            schedule: OnlineSchedule::default(),
            cai: CaiConfig::with_k(32),
            episodes: 4000,
            warmup_episodes: 200,
            buffer_episodes: 5000,
            eval_every: 200,
            eval_episodes: 100,
            bonus_lambda: 0.2,
            max_bonus: 2.0,
            active_fraction: 1.0,
            target_success: None,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        self.model.validate()?;
        self.cai.validate()?;
        if self.model.state_dim != STATE_DIM || self.model.action_dim != ACTION_DIM || self.cai.action_dim() != ACTION_DIM {
            return Err(Error::Config("model and cai must match the slide world's state and action sizes".into()));
        }
        if self.warmup_episodes == 0 || self.buffer_episodes == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("warmup, buffer, eval cadence and eval episodes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.active_fraction) {
            return Err(Error::Config("active_fraction must lie in [0, 1]".into()));
        }
        if !(self.bonus_lambda >= 0.0 && self.max_bonus >= 0.0) {
            return Err(Error::Config("bonus_lambda and max_bonus must be non-negative".into()));
        }
        Ok(())
    }
}

/// Independent generator streams of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streams {
    /// Episode resets.
    pub env: ChaCha8Rng,
    /// Behaviour actions.
    pub explore: ChaCha8Rng,
    /// Replay sampling.
    pub sample: ChaCha8Rng,
    /// Density-model minibatches.
    pub model: ChaCha8Rng,
}

impl Streams {
    pub const INIT: u64 = 0;
    pub const ENV: u64 = 1;
    pub const EXPLORE: u64 = 2;
    pub const SAMPLE: u64 = 3;
    pub const MODEL: u64 = 4;
    pub const EVAL: u64 = 5;

    pub fn new(seed: u64) -> Self {
        let s = |k| ChaCha8Rng::seed_from_u64(derive_seed(seed, k, 0));
        Self {
            env: s(Self::ENV),
            explore: s(Self::EXPLORE),
            sample: s(Self::SAMPLE),
            model: s(Self::MODEL),
        }
    }

    /// Generator for agent initialisation.
    pub fn init(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(seed, Self::INIT, 0))
    }

    /// Generator for the evaluation run after `episode` training episodes.
    pub fn eval(seed: u64, episode: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(seed, Self::EVAL, episode as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub success_rate: f64,
    /// Mean stored influence score, when scores are kept.
    pub mean_cai: Option<f64>,
    /// Mean losses over the updates since the previous row.
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub seed: u64,
    pub variant: Variant,
}

/// First evaluated episode count whose success rate reaches `target`.
pub fn episodes_to_success(curve: &[CurveRow], target: f64) -> Option<usize> {
    curve.iter().find(|r| r.success_rate >= target).map(|r| r.episode)
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Greedy success rate over `n` fresh episodes.
pub fn evaluate(agent: &Agent, params: &SlideParams, n: usize, rng: &mut impl Rng) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let mut wins = 0;
    for _ in 0..n {
        let (mut s, goal) = params.reset(rng);
        for _ in 0..params.episode_len {
            let a = agent.act(&observation(&s, &goal))?;
            s = params.step(&s, a[0]).0;
        }
        if task_reward(achieved_goal(&s), &goal) == 0.0 {
            wins += 1;
        }
    }
    Ok(wins as f64 / n as f64)
}

/// Full state of one training run; serializable so runs can resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub config: RlConfig,
    pub variant: Variant,
    pub seed: u64,
    pub agent: Agent,
    pub model: Option<TransitionModel>,
    pub buffer: ReplayBuffer,
    pub streams: Streams,
    /// Episodes collected so far, warmup included.
    pub collected: usize,
    pub curve: Vec<CurveRow>,
    next_id: u64,
    model_ready: bool,
    loss_sum: (f64, f64, usize),
    #[serde(skip, default = "one")]
    workers: usize,
}

fn one() -> usize {
    1
}

impl Trainer {
    pub fn new(config: RlConfig, variant: Variant, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Streams::init(seed);
        let agent = Agent::new(config.agent.clone(), STATE_DIM + 1, ACTION_DIM, &mut init)?;
        let model = if variant.uses_model() {
            Some(TransitionModel::new(config.model.clone(), derive_seed(seed, Streams::MODEL, 1))?)
        } else {
            None
        };
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_episodes)?,
            streams: Streams::new(seed),
            config,
            variant,
            seed,
            agent,
            model,
            collected: 0,
            curve: Vec::new(),
            next_id: 0,
            model_ready: false,
            loss_sum: (0.0, 0.0, 0),
            workers: 1,
        })
    }

    /// Threads used for rescoring; results do not depend on it.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn set_workers(&mut self, workers: usize) {
        self.workers = workers.max(1);
    }

    /// Training episodes run so far, warmup excluded.
    pub fn trained_episodes(&self) -> usize {
        self.collected.saturating_sub(self.config.warmup_episodes)
    }

    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            her_prob: self.config.agent.her_prob,
            prioritized: self.variant.uses_priority(),
            bonus_lambda: if self.variant.uses_bonus() { self.config.bonus_lambda } else { 0.0 },
            max_bonus: self.config.max_bonus,
        }
    }

    pub fn explore_config(&self) -> ExploreConfig {
        ExploreConfig {
            epsilon: self.config.agent.epsilon,
            action_noise: self.config.agent.action_noise,
            active_fraction: if self.variant.uses_active() { self.config.active_fraction } else { 0.0 },
        }
    }

    /// Whether the run has finished its budget or hit the target success rate.
    pub fn done(&self) -> bool {
        if self.trained_episodes() >= self.config.episodes && self.collected >= self.config.warmup_episodes {
            return true;
        }
        match (self.config.target_success, self.curve.last()) {
            (Some(t), Some(r)) => r.success_rate >= t,
            _ => false,
        }
    }

    /// Run until `done`, calling `on_row` after each evaluation.
    pub fn run(&mut self, mut on_row: impl FnMut(&Trainer) -> Result<()>) -> Result<Vec<CurveRow>> {
        while self.collected < self.config.warmup_episodes {
            self.warmup_episode()?;
        }
        if self.curve.is_empty() {
            self.evaluate_now()?;
            on_row(self)?;
        }
        while !self.done() {
            self.train_episode()?;
            if self.trained_episodes().is_multiple_of(self.config.eval_every) {
                self.evaluate_now()?;
                on_row(self)?;
            }
        }
        Ok(self.curve.clone())
    }

    fn warmup_episode(&mut self) -> Result<()> {
        let p = &self.config.env;
        let (mut s, goal) = p.reset(&mut self.streams.env);
        let mut states = vec![s];
        let mut actions = Vec::with_capacity(p.episode_len);
        for _ in 0..p.episode_len {
            let a: f64 = self.streams.explore.random_range(-1.0..=1.0);
            s = p.step(&s, a).0;
            states.push(s);
            actions.push(a);
        }
        self.store(Episode {
            id: 0,
            goal,
            states,
            actions,
            scores: None,
        })
    }

    fn train_episode(&mut self) -> Result<()> {
        let explore = self.explore_config();
        let p = self.config.env.clone();
        let (mut s, goal) = p.reset(&mut self.streams.env);
        let mut states = vec![s];
        let mut actions = Vec::with_capacity(p.episode_len);
        for _ in 0..p.episode_len {
            let obs = observation(&s, &goal);
            let (a, _) = explore_action(
                &self.agent,
                self.model.as_ref(),
                &obs,
                &obs[..STATE_DIM],
                &explore,
                &self.config.cai,
                &mut self.streams.explore,
            )?;
            s = p.step(&s, a[0]).0;
            states.push(s);
            actions.push(a[0]);
        }
        self.store(Episode {
            id: 0,
            goal,
            states,
            actions,
            scores: None,
        })?;
        let sample = self.sample_config();
        for _ in 0..self.config.agent.updates_per_episode {
            let batch = self.buffer.sample_batch(self.config.agent.batch_size, &sample, &mut self.streams.sample)?;
            let UpdateStats { critic_loss, actor_loss } = self.agent.ddpg_update(&batch)?;
            self.loss_sum.0 += critic_loss;
            self.loss_sum.1 += actor_loss;
            self.loss_sum.2 += 1;
        }
        self.agent.update_targets()
    }

    /// Insert an episode, update the observation normalizer, and run any
    /// scheduled model training followed by a full rescore.
    fn store(&mut self, mut ep: Episode) -> Result<()> {
        ep.id = self.next_id;
        self.next_id += 1;
        let rows: Vec<Vec<f64>> = ep.states.iter().map(|s| observation(s, &ep.goal)).collect();
        self.agent.obs_norm.update_rows(&rows)?;
        if self.variant.needs_scores() && self.model_ready {
            ep.scores = Some(score_episode(self.model.as_ref().expect("fitted"), &ep, &self.config.cai)?);
        }
        self.buffer.push(ep)?;
        self.collected += 1;
        if let Some(model) = self.model.as_mut() {
            if self.config.schedule.batches_at(self.collected) > 0 {
                let data = model_data(&self.buffer, &self.config.model)?;
                fit_online(model, &data, self.collected, &self.config.schedule, &mut self.streams.model)?;
                self.model_ready = true;
                if self.variant.needs_scores() {
                    self.rescore()?;
                }
            }
        }
        Ok(())
    }

    /// Recompute every stored score with the current model.
    pub fn rescore(&mut self) -> Result<()> {
        let Some(model) = self.model.as_ref() else {
            return Err(Error::InvalidArgument("rescoring needs a model".into()));
        };
        let cai = &self.config.cai;
        let eps: Vec<&Episode> = self.buffer.episodes().collect();
        let workers = self.workers.min(eps.len()).max(1);
        let scores: Vec<Vec<f64>> = if workers == 1 {
            eps.iter().map(|e| score_episode(model, e, cai)).collect::<Result<_>>()?
        } else {
            let chunk = eps.len().div_ceil(workers);
            std::thread::scope(|scope| {
                let handles: Vec<_> = eps
                    .chunks(chunk)
                    .map(|part| scope.spawn(move || part.iter().map(|e| score_episode(model, e, cai)).collect::<Result<Vec<_>>>()))
                    .collect();
                let mut all = Vec::with_capacity(eps.len());
                for h in handles {
                    all.extend(h.join().expect("scoring thread panicked")?);
                }
                Ok::<_, Error>(all)
            })?
        };
        let mut it = scores.into_iter();
        self.buffer.set_scores(|_| Ok(it.next().expect("one score vector per episode")))
    }

    fn evaluate_now(&mut self) -> Result<()> {
        let episode = self.trained_episodes();
        let mut rng = Streams::eval(self.seed, episode);
        let success_rate = evaluate(&self.agent, &self.config.env, self.config.eval_episodes, &mut rng)?;
        let mean_cai = if self.variant.needs_scores() {
            let (sum, n) = self
                .buffer
                .episodes()
                .filter_map(|e| e.scores.as_ref())
                .fold((0.0, 0usize), |(s, n), v| (s + v.iter().sum::<f64>(), n + v.len()));
            (n > 0).then(|| sum / n as f64)
        } else {
            None
        };
        let (c, a, n) = self.loss_sum;
        self.curve.push(CurveRow {
            episode,
            success_rate,
            mean_cai,
            critic_loss: (n > 0).then(|| c / n as f64),
            actor_loss: (n > 0).then(|| a / n as f64),
            seed: self.seed,
            variant: self.variant,
        });
        self.loss_sum = (0.0, 0.0, 0);
        Ok(())
    }
}

/// Influence score of each non-final state, seeded per `(episode id, step)`.
fn score_episode(model: &TransitionModel, ep: &Episode, cfg: &CaiConfig) -> Result<Vec<f64>> {
    ep.states[..ep.len()]
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, ep.id, t as u64));
            Ok(cai_score(model, &s.to_vec(), cfg, &mut rng)?.value)
        })
        .collect()
}

fn model_data(buffer: &ReplayBuffer, cfg: &ModelConfig) -> Result<TransitionBatch> {
    let triples: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = buffer
        .episodes()
        .flat_map(|e| {
            (0..e.len()).map(move |t| (e.states[t].to_vec(), vec![e.actions[t]], e.states[t + 1].to_vec()))
        })
        .collect();
    TransitionBatch::from_triples(triples.iter().map(|(s, a, n)| (&s[..], &a[..], &n[..])), cfg)
}
