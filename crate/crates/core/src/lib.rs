//! Causal action influence (CAI) laboratory.
//!
//! Estimates, state by state, how much an agent's action can change an
//! object's next state, measured as the conditional mutual information
//! between action and next object state under a learned Gaussian transition
//! model. The crate bundles everything needed to evaluate that signal and to
//! use it inside reinforcement learning:
//!
//! * [`gaussian`]: closed-form and bounded divergences for Gaussians and mixtures
//! * [`nn`]: dense networks, Adam, normalization, spectral norm
//! * [`model`]: the probabilistic one-step transition model
//! * [`cai`]: the influence estimator, entropy baseline, and influence-seeking action choice
//! * [`env`]: the 1D slide world with ground-truth influence labels
//! * [`detect`]: data collection and detection metrics
//! * [`rl`]: DDPG with hindsight relabeling, plus influence bonus, active exploration, and influence-prioritized replay

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gaussian;
pub mod nn;

pub use error::{Error, Result};
pub mod data;
pub mod env;
pub mod model;
pub mod cai;
pub mod detect;
pub mod rl;
pub mod config;
pub mod cli;
