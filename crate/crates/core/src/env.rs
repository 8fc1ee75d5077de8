//! The 1D slide world.
//!
//! An agent and an object share a line segment `[0, 1]`. The agent
//! accelerates left or right but cannot pass a barrier in the middle; the
//! object starts left of the barrier and has to be knocked into a goal zone
//! on the right. On contact the agent hands its whole velocity to the object
//! and stops. State layout is `[agent_pos, agent_vel, obj_pos, obj_vel]`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::TransitionRecord;
use crate::error::{check_dim, Error, Result};

pub const STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 1;
/// Indices of the object coordinates within the state vector.
pub const OBJECT_DIMS: [usize; 2] = [2, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlideParams {
    pub world_hi: f64,
    pub barrier_pos: f64,
    pub agent_halfwidth: f64,
    pub obj_halfwidth: f64,
    pub accel_scale: f64,
    pub damping: f64,
    pub drag: f64,
    pub goal_halfwidth: f64,
    pub goal_center_range: [f64; 2],
    pub agent_init_range: [f64; 2],
    pub obj_init_range: [f64; 2],
    pub episode_len: usize,
}

impl Default for SlideParams {
    fn default() -> Self {
        Self {
            world_hi: 1.0,
            barrier_pos: 0.5,
            agent_halfwidth: 0.025,
            obj_halfwidth: 0.025,
            accel_scale: 0.04,
            damping: 0.9,
            drag: 0.98,
            goal_halfwidth: 0.05,
            goal_center_range: [0.6, 0.95],
            agent_init_range: [0.05, 0.35],
            obj_init_range: [0.4, 0.48],
            episode_len: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlideState {
    pub agent_pos: f64,
    pub agent_vel: f64,
    pub obj_pos: f64,
    pub obj_vel: f64,
}

impl SlideState {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.agent_pos, self.agent_vel, self.obj_pos, self.obj_vel]
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        check_dim(STATE_DIM, s.len())?;
        Ok(Self {
            agent_pos: s[0],
            agent_vel: s[1],
            obj_pos: s[2],
            obj_vel: s[3],
        })
    }
}

/// Closed interval `[center − halfwidth, center + halfwidth]` on the line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub center: f64,
    pub halfwidth: f64,
}

impl SlideParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.world_hi,
            self.barrier_pos,
            self.agent_halfwidth,
            self.obj_halfwidth,
            self.accel_scale,
            self.damping,
            self.drag,
            self.goal_halfwidth,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.episode_len == 0 {
            return Err(Error::InvalidArgument("slide parameters must be positive".into()));
        }
        if self.goal_center_range[0] - self.goal_halfwidth <= self.barrier_pos
            || self.goal_center_range[1] + self.goal_halfwidth > self.world_hi + 1e-12
            || self.goal_center_range[0] > self.goal_center_range[1]
        {
            return Err(Error::InvalidArgument("goal zone must lie right of the barrier".into()));
        }
        if self.obj_init_range[1] >= self.barrier_pos || self.agent_init_range[1] + self.agent_halfwidth + self.obj_halfwidth > self.obj_init_range[0] + 1e-12 {
            return Err(Error::InvalidArgument("initial ranges must put the agent left of the object, left of the barrier".into()));
        }
        Ok(())
    }

    /// Rightmost admissible agent centre.
    pub fn agent_max(&self) -> f64 {
        self.barrier_pos - self.agent_halfwidth
    }

    pub fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Goal {
        let [lo, hi] = self.goal_center_range;
        Goal {
            center: rng.random_range(lo..=hi),
            halfwidth: self.goal_halfwidth,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (SlideState, Goal) {
        let [alo, ahi] = self.agent_init_range;
        let [olo, ohi] = self.obj_init_range;
        let state = SlideState {
            agent_pos: rng.random_range(alo..=ahi),
            agent_vel: 0.0,
            obj_pos: rng.random_range(olo..=ohi),
            obj_vel: 0.0,
        };
        (state, self.sample_goal(rng))
    }

    /// Advance one step. Returns the next state and whether the agent hit the object.
    ///
    /// The object drifts first under drag; the agent then accelerates and
    /// moves, and a contact hands the agent's velocity to the object so that a
    /// hit at velocity `v` leaves the object moving at exactly `v`.
    pub fn step(&self, s: &SlideState, action: f64) -> (SlideState, bool) {
        let a = if action.is_nan() { 0.0 } else { action.clamp(-1.0, 1.0) };
        let mut n = *s;

        n.obj_vel *= self.drag;
        n.obj_pos += n.obj_vel;
        let obj_max = self.world_hi - self.obj_halfwidth;
        if n.obj_pos > obj_max {
            n.obj_pos = obj_max;
            n.obj_vel = 0.0;
        } else if n.obj_pos < self.obj_halfwidth {
            n.obj_pos = self.obj_halfwidth;
            n.obj_vel = 0.0;
        }

        n.agent_vel = self.damping * (n.agent_vel + self.accel_scale * a);
        n.agent_pos += n.agent_vel;
        let mut blocked = false;
        if n.agent_pos >= self.agent_max() {
            n.agent_pos = self.agent_max();
            blocked = true;
        } else if n.agent_pos < self.agent_halfwidth {
            n.agent_pos = self.agent_halfwidth;
            n.agent_vel = 0.0;
        }

        let touching = n.agent_pos + self.agent_halfwidth >= n.obj_pos - self.obj_halfwidth;
        let contact = touching && n.agent_vel > n.obj_vel;
        if contact {
            n.obj_vel = n.agent_vel;
            n.agent_vel = 0.0;
            n.agent_pos = n.agent_pos.min(n.obj_pos - self.obj_halfwidth - self.agent_halfwidth);
        } else if blocked {
            n.agent_vel = 0.0;
        }
        if touching && !contact {
            // de-penetrate without transferring momentum
            n.agent_pos = n.agent_pos.min(n.obj_pos - self.obj_halfwidth - self.agent_halfwidth);
        }
        (n, contact)
    }

    /// True iff full acceleration in either direction produces a contact
    /// that changes the object's state.
    pub fn ground_truth_influence(&self, s: &SlideState) -> bool {
        [1.0, -1.0].into_iter().any(|a| {
            let (n, contact) = self.step(s, a);
            contact && (n.obj_pos != s.obj_pos || n.obj_vel != s.obj_vel)
        })
    }
}

/// Sparse goal reward: `0` inside the closed goal interval, `−1` elsewhere.
pub fn task_reward(achieved: f64, goal: &Goal) -> f64 {
    if (achieved - goal.center).abs() <= goal.halfwidth {
        0.0
    } else {
        -1.0
    }
}

pub fn achieved_goal(s: &SlideState) -> f64 {
    s.obj_pos
}

/// Add per-dimension Gaussian noise with std `level × (dataset std of that
/// dimension)` to the state fields `s` and `s_next`. Actions and labels are
/// left alone.
pub fn add_observation_noise(records: &mut [TransitionRecord], level: f64, rng: &mut impl Rng) -> Result<()> {
    if !(level >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {level} must be >= 0")));
    }
    if records.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if level == 0.0 {
        return Ok(());
    }
    let d = records[0].s.len();
    let n = records.len() as f64;
    let mut mean = vec![0.0; d];
    for r in records.iter() {
        check_dim(d, r.s.len())?;
        for (m, x) in mean.iter_mut().zip(&r.s) {
            *m += x / n;
        }
    }
    let mut var = vec![0.0; d];
    for r in records.iter() {
        for ((v, x), m) in var.iter_mut().zip(&r.s).zip(&mean) {
            *v += (x - m).powi(2) / n;
        }
    }
    let noise: Vec<Option<Normal<f64>>> = var
        .iter()
        .map(|v| {
            let std = level * v.sqrt();
            (std > 0.0).then(|| Normal::new(0.0, std).expect("positive std"))
        })
        .collect();
    for r in records.iter_mut() {
        check_dim(d, r.s_next.len())?;
        for (k, dist) in noise.iter().enumerate() {
            if let Some(dist) = dist {
                r.s[k] += dist.sample(rng);
                r.s_next[k] += dist.sample(rng);
            }
        }
    }
    Ok(())
}

/// Something that picks an action in the slide world.
pub trait Policy {
    fn act(&mut self, params: &SlideParams, s: &SlideState, goal: &Goal, t: usize, rng: &mut dyn rand::RngCore) -> f64;
}

/// Uniform random actions in `[−1, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, _: &SlideParams, _: &SlideState, _: &Goal, _: usize, rng: &mut dyn rand::RngCore) -> f64 {
        Uniform::new_inclusive(-1.0, 1.0).expect("valid range").sample(rng)
    }
}

/// Hand-written controller that approaches the object, hits it at the speed
/// needed for it to coast into the goal by the last step, and tops the speed
/// up by pushing when the object is too slow. Optional Gaussian action noise
/// makes it useful as a data-collection policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPolicy {
    pub noise_std: f64,
}

impl ScriptedPolicy {
    pub fn new(noise_std: f64) -> Self {
        Self { noise_std }
    }

    /// Noise-free action.
    pub fn plan(params: &SlideParams, s: &SlideState, goal: &Goal, t: usize) -> f64 {
        let steps_after = params.episode_len.saturating_sub(t + 1);
        // object position after this step's drift
        let obj_vel_next = s.obj_vel * params.drag;
        let obj_next = s.obj_pos + obj_vel_next;
        let coast = |n: usize| -> f64 {
            let d = params.drag;
            d * (1.0 - d.powi(n as i32)) / (1.0 - d)
        };
        let gap = (obj_next - params.obj_halfwidth) - (s.agent_pos + params.agent_halfwidth);
        let needed = if steps_after == 0 {
            0.0
        } else {
            ((goal.center - obj_next) / coast(steps_after)).max(0.0)
        };
        let target = if needed > obj_vel_next && gap <= needed {
            needed
        } else if needed > obj_vel_next {
            (0.4 * gap).max(needed).min(gap * 0.95)
        } else {
            // object fast enough already; hang back
            (0.4 * gap).clamp(-0.05, 0.0)
        };
        ((target / params.damping - s.agent_vel) / params.accel_scale).clamp(-1.0, 1.0)
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, params: &SlideParams, s: &SlideState, goal: &Goal, t: usize, rng: &mut dyn rand::RngCore) -> f64 {
        let a = Self::plan(params, s, goal, t);
        if self.noise_std > 0.0 {
            let n: f64 = Normal::new(0.0, self.noise_std).expect("positive std").sample(rng);
            (a + n).clamp(-1.0, 1.0)
        } else {
            a
        }
    }
}

/// Outcome of one full episode.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub goal: Goal,
    /// `episode_len + 1` states.
    pub states: Vec<SlideState>,
    pub actions: Vec<f64>,
    pub contacts: Vec<bool>,
}

impl Rollout {
    pub fn success(&self) -> bool {
        task_reward(achieved_goal(self.states.last().expect("non-empty")), &self.goal) == 0.0
    }
}

pub fn rollout(params: &SlideParams, policy: &mut dyn Policy, rng: &mut dyn rand::RngCore) -> Rollout {
    let (mut s, goal) = params.reset(rng);
    let mut states = vec![s];
    let mut actions = Vec::with_capacity(params.episode_len);
    let mut contacts = Vec::with_capacity(params.episode_len);
    for t in 0..params.episode_len {
        let a = policy.act(params, &s, &goal, t, rng).clamp(-1.0, 1.0);
        let (n, c) = params.step(&s, a);
        actions.push(a);
        contacts.push(c);
        states.push(n);
        s = n;
    }
    Rollout {
        goal,
        states,
        actions,
        contacts,
    }
}
