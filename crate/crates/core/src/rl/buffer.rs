use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{achieved_goal, task_reward, Goal, SlideState};
use crate::error::{Error, Result};

/// One stored trajectory with optional per-state influence scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: u64,
    pub goal: Goal,
    /// `T + 1` states.
    pub states: Vec<SlideState>,
    pub actions: Vec<f64>,
    /// Influence score of `states[t]` for `t < T`, once computed.
    pub scores: Option<Vec<f64>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_influence(&self) -> Option<f64> {
        self.scores.as_ref().map(|s| s.iter().sum())
    }

    pub fn success(&self) -> bool {
        task_reward(achieved_goal(self.states.last().expect("non-empty")), &self.goal) == 0.0
    }
}

/// Rank-based selection probabilities from episode totals. Ranks ascend with
/// the total (rank 1 is the lowest, ties go to the earlier entry first) and
/// episode `i` gets weight `1 / (M + 1 − rank_i)`, normalized.
pub fn rank_probabilities(totals: &[f64]) -> Result<Vec<f64>> {
    if totals.is_empty() {
        return Err(Error::Empty("episode totals"));
    }
    if totals.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("episode totals"));
    }
    let m = totals.len();
    let mut order: Vec<usize> = (0..m).collect();
    // stable sort keeps earlier (older) episodes first among equal totals
    order.sort_by(|&a, &b| totals[a].total_cmp(&totals[b]));
    let mut weights = vec![0.0; m];
    for (r, &i) in order.iter().enumerate() {
        let rank = r + 1;
        weights[i] = 1.0 / (m + 1 - rank) as f64;
    }
    let sum: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / sum).collect())
}

/// One sampled training tuple; observations are `s ∥ g` before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    /// Origin of the tuple, for tests and bonus lookup.
    pub episode: usize,
    pub step: usize,
}

pub fn observation(s: &SlideState, goal: &Goal) -> Vec<f64> {
    let mut v = s.to_vec();
    v.push(goal.center);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Probability of replacing the goal with a later achieved goal.
    pub her_prob: f64,
    pub prioritized: bool,
    pub bonus_lambda: f64,
    pub max_bonus: f64,
}

/// Sparse reward plus clipped influence bonus, capped at zero.
pub fn bonus_reward(r_task: f64, cai: f64, lambda: f64, max_bonus: f64) -> f64 {
    (r_task + lambda * cai.min(max_bonus)).min(0.0)
}

/// FIFO store of up to `capacity` episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Episode>,
    #[serde(skip)]
    priorities: Option<Vec<f64>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            episodes: VecDeque::new(),
            priorities: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    pub fn episode(&self, i: usize) -> &Episode {
        &self.episodes[i]
    }

    pub fn push(&mut self, ep: Episode) -> Result<()> {
        if ep.is_empty() || ep.states.len() != ep.len() + 1 {
            return Err(Error::InvalidArgument("episode needs T actions and T + 1 states".into()));
        }
        if let Some(s) = &ep.scores {
            if s.len() != ep.len() || s.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument("episode scores must be T finite non-negative values".into()));
            }
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(ep);
        self.priorities = None;
        Ok(())
    }

    /// Replace the scores of every stored episode.
    pub fn set_scores(&mut self, mut score: impl FnMut(&Episode) -> Result<Vec<f64>>) -> Result<()> {
        for ep in self.episodes.iter_mut() {
            let s = score(ep)?;
            if s.len() != ep.len() {
                return Err(Error::DimensionMismatch {
                    expected: ep.len(),
                    actual: s.len(),
                });
            }
            ep.scores = Some(s);
        }
        self.priorities = None;
        Ok(())
    }

    /// Per-episode selection probabilities under influence prioritization.
    pub fn episode_priorities(&self) -> Result<Vec<f64>> {
        let totals: Vec<f64> = self
            .episodes
            .iter()
            .map(|e| e.total_influence().ok_or(Error::InvalidArgument(format!("episode {} has no scores", e.id))))
            .collect::<Result<_>>()?;
        rank_probabilities(&totals)
    }

    fn cached_priorities(&mut self) -> Result<&[f64]> {
        if self.priorities.is_none() {
            self.priorities = Some(self.episode_priorities()?);
        }
        Ok(self.priorities.as_deref().expect("just filled"))
    }

    /// Draw `n` training tuples: an episode (by priority or uniformly), a
    /// uniform step, and with probability `her_prob` a goal taken from a
    /// later achieved state of the same episode.
    pub fn sample_batch(&mut self, n: usize, cfg: &SampleConfig, rng: &mut impl Rng) -> Result<Vec<Transition>> {
        if self.episodes.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        let weights = if cfg.prioritized {
            Some(WeightedIndex::new(self.cached_priorities()?).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        } else {
            None
        };
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let e = match &weights {
                Some(w) => w.sample(rng),
                None => rng.random_range(0..self.episodes.len()),
            };
            let ep = &self.episodes[e];
            let t = rng.random_range(0..ep.len());
            let goal = if rng.random::<f64>() < cfg.her_prob {
                let future = rng.random_range(t + 1..=ep.len());
                Goal {
                    center: achieved_goal(&ep.states[future]),
                    halfwidth: ep.goal.halfwidth,
                }
            } else {
                ep.goal
            };
            let mut reward = task_reward(achieved_goal(&ep.states[t + 1]), &goal);
            if cfg.bonus_lambda != 0.0 {
                let c = ep.scores.as_ref().map_or(0.0, |s| s[t]);
                reward = bonus_reward(reward, c, cfg.bonus_lambda, cfg.max_bonus);
            }
            out.push(Transition {
                obs: observation(&ep.states[t], &goal),
                action: vec![ep.actions[t]],
                reward,
                next_obs: observation(&ep.states[t + 1], &goal),
                done: false,
                episode: e,
                step: t,
            });
        }
        Ok(out)
    }
}
