//! Goal-conditioned DDPG with hindsight relabeling on the slide world, with
//! three optional uses of the influence score: a reward bonus, influence-seeking
//! exploration, and episode prioritization by total influence.

mod agent;
mod buffer;
mod explore;
mod train;

pub use agent::{Agent, AgentConfig, UpdateStats};
pub use buffer::{bonus_reward, observation, rank_probabilities, Episode, ReplayBuffer, SampleConfig, Transition};
pub use explore::{explore_action, ActionSource, ExploreConfig};
pub use train::{
    episodes_to_success, evaluate, rl_slide_params, write_curve_csv, CurveRow, RlConfig, Streams, Trainer, Variant,
};
