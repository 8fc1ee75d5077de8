use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::agent::Agent;
use crate::cai::{select_influential_action, CaiConfig, PredictiveModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub epsilon: f64,
    pub action_noise: f64,
    /// Share of ε-steps that pick the most influential sampled action.
    pub active_fraction: f64,
}

/// What produced an exploratory action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSource {
    Policy,
    Uniform,
    /// Influence-seeking choice, drawn with the given CAI seed.
    Active(u64),
}

/// Behaviour action for observation `obs` at raw state `s`.
///
/// Draw order: one ε coin; on an ε-step, an active coin only when
/// `active_fraction > 0`, then either a CAI seed or one uniform draw; on a
/// policy step, one Gaussian noise draw per action dimension.
pub fn explore_action<M: PredictiveModel, R: Rng + ?Sized>(
    agent: &Agent,
    model: Option<&M>,
    obs: &[f64],
    s: &[f64],
    cfg: &ExploreConfig,
    cai: &CaiConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, ActionSource)> {
    if rng.random::<f64>() < cfg.epsilon {
        if cfg.active_fraction > 0.0 && rng.random::<f64>() < cfg.active_fraction {
            let model = model.ok_or(Error::InvalidArgument("active exploration needs a model".into()))?;
            let seed = rng.random::<u64>();
            let a = select_influential_action(model, s, cai, &mut ChaCha8Rng::seed_from_u64(seed))?;
            return Ok((a, ActionSource::Active(seed)));
        }
        let a = (0..agent.action_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        return Ok((a, ActionSource::Uniform));
    }
    let mut a = agent.act(obs)?;
    if cfg.action_noise > 0.0 {
        let noise = Normal::new(0.0, cfg.action_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in a.iter_mut() {
            *v = (*v + noise.sample(rng)).clamp(-1.0, 1.0);
        }
    }
    Ok((a, ActionSource::Policy))
}
