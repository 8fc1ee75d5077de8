use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::Transition;
use crate::error::{check_dim, Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Init, Mlp, Normalizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Fraction of the target network kept at each Polyak update.
    pub polyak: f64,
    pub hidden: Vec<usize>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch_size: usize,
    pub updates_per_episode: usize,
    pub action_noise: f64,
    /// Probability of a non-policy exploratory action.
    pub epsilon: f64,
    pub action_l2: f64,
    pub q_clip: [f64; 2],
    pub her_prob: f64,
    pub obs_clip: f64,
    pub obs_std_floor: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            polyak: 0.95,
            hidden: vec![64, 64],
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            batch_size: 256,
            updates_per_episode: 20,
            action_noise: 0.2,
            epsilon: 0.3,
            action_l2: 1.0,
            q_clip: [-50.0, 0.0],
            her_prob: 0.8,
            obs_clip: 5.0,
            obs_std_floor: 0.01,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [self.gamma, self.polyak, self.epsilon, self.her_prob];
        if unit.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("gamma, polyak, epsilon and her_prob must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("batch size and hidden widths must be positive".into()));
        }
        if !(self.q_clip[0] <= self.q_clip[1]) || !(self.action_noise >= 0.0) || !(self.action_l2 >= 0.0) {
            return Err(Error::Config("bad q_clip, action_noise or action_l2".into()));
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0 && self.obs_clip > 0.0 && self.obs_std_floor > 0.0) {
            return Err(Error::Config("learning rates, obs_clip and obs_std_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

/// Deterministic actor and Q critic with target copies and an observation normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    config: AgentConfig,
    obs_dim: usize,
    action_dim: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    pub obs_norm: Normalizer,
}

fn rows(data: &[&[f64]], width: usize) -> Array2<f64> {
    let flat: Vec<f64> = data.iter().flat_map(|r| r.iter().copied()).collect();
    Array2::from_shape_vec((data.len(), width), flat).expect("rows checked by caller")
}

impl Agent {
    pub fn new(config: AgentConfig, obs_dim: usize, action_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut aw = vec![obs_dim];
        aw.extend(&config.hidden);
        aw.push(action_dim);
        let mut cw = vec![obs_dim + action_dim];
        cw.extend(&config.hidden);
        cw.push(1);
        let actor = Mlp::new(&aw, Activation::Relu, Activation::Tanh, Init::XavierUniform, rng)?;
        let critic = Mlp::new(&cw, Activation::Relu, Activation::Identity, Init::XavierUniform, rng)?;
        Ok(Self {
            actor_opt: AdamState::for_mlp(AdamConfig::with_lr(config.lr_actor), &actor),
            critic_opt: AdamState::for_mlp(AdamConfig::with_lr(config.lr_critic), &critic),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            obs_norm: Normalizer::new(obs_dim, -config.obs_clip, config.obs_clip).with_std_floor(config.obs_std_floor),
            obs_dim,
            action_dim,
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Greedy action in `[−1, 1]`.
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let x = self.obs_norm.apply(obs)?;
        self.actor.forward(&x)
    }

    /// One critic step and one actor step on `batch`, both from gradients
    /// taken at the current parameters. Targets are not touched.
    pub fn ddpg_update(&mut self, batch: &[Transition]) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        for t in batch {
            check_dim(self.obs_dim, t.obs.len())?;
            check_dim(self.obs_dim, t.next_obs.len())?;
            check_dim(self.action_dim, t.action.len())?;
        }
        let n = batch.len() as f64;
        let (od, ad) = (self.obs_dim, self.action_dim);
        let obs = self.obs_norm.apply_batch(rows(&batch.iter().map(|t| &t.obs[..]).collect::<Vec<_>>(), od).view())?;
        let next = self.obs_norm.apply_batch(rows(&batch.iter().map(|t| &t.next_obs[..]).collect::<Vec<_>>(), od).view())?;
        let actions = rows(&batch.iter().map(|t| &t.action[..]).collect::<Vec<_>>(), ad);

        let next_a = self.actor_target.forward_batch(next.view())?;
        let next_q = self
            .critic_target
            .forward_batch(concatenate(Axis(1), &[next.view(), next_a.view()]).expect("same rows").view())?;
        let [lo, hi] = self.config.q_clip;
        let y: Vec<f64> = batch
            .iter()
            .zip(next_q.column(0))
            .map(|(t, q)| {
                let cont = if t.done { 0.0 } else { 1.0 };
                (t.reward + self.config.gamma * cont * q).clamp(lo, hi)
            })
            .collect();

        let critic_in = concatenate(Axis(1), &[obs.view(), actions.view()]).expect("same rows");
        let tape = self.critic.forward_with_tape(critic_in)?;
        let q = tape.output().column(0).to_owned();
        let mut critic_loss = 0.0;
        let mut gq = Array2::zeros((batch.len(), 1));
        for i in 0..batch.len() {
            let e = q[i] - y[i];
            critic_loss += e * e / n;
            gq[[i, 0]] = 2.0 * e / n;
        }
        let (critic_grads, _) = self.critic.backward_tape(&tape, gq.view())?;

        let actor_tape = self.actor.forward_with_tape(obs.clone())?;
        let pi = actor_tape.output().clone();
        let q_pi_tape = self
            .critic
            .forward_with_tape(concatenate(Axis(1), &[obs.view(), pi.view()]).expect("same rows"))?;
        let m = (batch.len() * ad) as f64;
        let q_mean = q_pi_tape.output().sum() / n;
        let actor_loss = -q_mean + self.config.action_l2 * pi.mapv(|v| v * v).sum() / m;
        let up = Array2::from_elem((batch.len(), 1), -1.0 / n);
        let (_, g_in) = self.critic.backward_tape(&q_pi_tape, up.view())?;
        let mut g_pi = g_in.slice(s![.., od..]).to_owned();
        g_pi.zip_mut_with(&pi, |g, &p| *g += 2.0 * self.config.action_l2 * p / m);
        let (actor_grads, _) = self.actor.backward_tape(&actor_tape, g_pi.view())?;

        if !critic_grads.is_finite() || !actor_grads.is_finite() {
            return Err(Error::NonFinite("agent gradient"));
        }
        self.critic_opt.step_mlp(&mut self.critic, &critic_grads)?;
        self.actor_opt.step_mlp(&mut self.actor, &actor_grads)?;
        Ok(UpdateStats { critic_loss, actor_loss })
    }

    /// `target ← polyak·target + (1 − polyak)·online` for actor and critic.
    pub fn update_targets(&mut self) -> Result<()> {
        self.actor_target.polyak_from(&self.actor, self.config.polyak)?;
        self.critic_target.polyak_from(&self.critic, self.config.polyak)
    }

    /// Q-learning targets for a batch, after clipping.
    pub fn q_targets(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        let next = self
            .obs_norm
            .apply_batch(rows(&batch.iter().map(|t| &t.next_obs[..]).collect::<Vec<_>>(), self.obs_dim).view())?;
        let next_a = self.actor_target.forward_batch(next.view())?;
        let next_q = self
            .critic_target
            .forward_batch(concatenate(Axis(1), &[next.view(), next_a.view()]).expect("same rows").view())?;
        let [lo, hi] = self.config.q_clip;
        Ok(batch
            .iter()
            .zip(next_q.column(0))
            .map(|(t, q)| (t.reward + self.config.gamma * if t.done { 0.0 } else { *q }).clamp(lo, hi))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn batch(rng: &mut ChaCha8Rng, reward: Option<f64>) -> Vec<Transition> {
        (0..64)
            .map(|i| Transition {
                obs: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: vec![rng.random_range(-1.0..1.0)],
                reward: reward.unwrap_or(if i % 3 == 0 { 0.0 } else { -1.0 }),
                next_obs: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: false,
                episode: 0,
                step: 0,
            })
            .collect()
    }

    #[test]
    fn zero_retention_copies_online() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AgentConfig {
            polyak: 0.0,
            ..AgentConfig::default()
        };
        let mut agent = Agent::new(cfg, 5, 1, &mut rng).unwrap();
        let b = batch(&mut rng, None);
        agent.ddpg_update(&b).unwrap();
        agent.update_targets().unwrap();
        assert_eq!(agent.actor_target, agent.actor);
        assert_eq!(agent.critic_target, agent.critic);
    }

    #[test]
    fn q_targets_are_clipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = Agent::new(AgentConfig::default(), 5, 1, &mut rng).unwrap();
        let last = agent.critic_target.layers().len() - 1;
        agent.critic_target.layers_mut()[last].bias.fill(1e3);
        let b = batch(&mut rng, None);
        assert!(agent.q_targets(&b).unwrap().iter().all(|&y| y == 0.0));
        agent.critic_target.layers_mut()[last].bias.fill(-1e4);
        assert!(agent.q_targets(&b).unwrap().iter().all(|&y| y == -50.0));
    }

    #[test]
    fn frozen_batch_td_loss_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = Agent::new(AgentConfig::default(), 5, 1, &mut rng).unwrap();
        let b = batch(&mut rng, None);
        let first = agent.ddpg_update(&b).unwrap().critic_loss;
        let mut last = first;
        for _ in 0..50 {
            last = agent.ddpg_update(&b).unwrap().critic_loss;
        }
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn zero_reward_critic_tends_to_zero() {
        // self-looping states with actions covering the box, so the greedy
        // action's value is pinned by data and the fixed point is Q = 0
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = AgentConfig {
            polyak: 0.0,
            ..AgentConfig::default()
        };
        let mut agent = Agent::new(cfg, 5, 1, &mut rng).unwrap();
        let states: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let b: Vec<Transition> = (0..64)
            .map(|i| Transition {
                obs: states[i % 4].clone(),
                action: vec![-1.0 + 2.0 * (i / 4) as f64 / 15.0],
                reward: 0.0,
                next_obs: states[i % 4].clone(),
                done: false,
                episode: 0,
                step: 0,
            })
            .collect();
        for _ in 0..1500 {
            agent.ddpg_update(&b).unwrap();
            agent.update_targets().unwrap();
        }
        let x = agent.obs_norm.apply_batch(rows(&b.iter().map(|t| &t.obs[..]).collect::<Vec<_>>(), 5).view()).unwrap();
        let a = rows(&b.iter().map(|t| &t.action[..]).collect::<Vec<_>>(), 1);
        let q = agent.critic.forward_batch(concatenate(Axis(1), &[x.view(), a.view()]).unwrap().view()).unwrap();
        let worst = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 0.02, "{worst}");
        assert!(agent.q_targets(&b).unwrap().iter().all(|y| (-0.02..=0.0).contains(y)));
    }
}
