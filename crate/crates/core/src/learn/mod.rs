//! Stop/Go learning for robot vehicles: observation and reward of the
//! decision process, a small value network and a double deep-Q trainer.

mod dqn;
mod mlp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ZoneStats;
use crate::dynamics::{VehiclePhase, World, WAIT_SPEED};
use crate::net::Approach;

pub use dqn::{evaluate, run_mixed, td_targets, train, CurvePoint, EpsilonGreedy, Experience, QPolicy, ReplayBuffer, TrainOutcome, CURVE_CSV_HEADER};
pub use mlp::{gradient_check_with, Adam, Cache, Grads, Layer, Mlp};

pub const OBS_DIM: usize = 11;
pub const N_ACTIONS: usize = 2;

/// Queue lengths are divided by this many vehicles.
pub const QUEUE_SCALE: f64 = 20.0;
/// Summed waits are divided by this many seconds.
pub const WAIT_SCALE: f64 = 120.0;
/// Upper clip applied to normalised features.
pub const FEATURE_CLIP: f64 = 5.0;

/// Queue lengths and summed waits for the four approaches starting with
/// the ego approach and turning clockwise, then the box occupancy flag,
/// the ego distance to its stop line over the zone radius and the ego
/// speed over the desired speed.
pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at iteration {iteration} (last finite loss {last_loss})")]
    DivergedLoss { iteration: usize, last_loss: f64 },
    #[error("scenario has no robot vehicles")]
    NoRobots,
    #[error("malformed policy file: {0}")]
    BadPolicyFile(String),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Approach order relative to `ego`.
pub fn relative_approaches(ego: Approach) -> [Approach; 4] {
    std::array::from_fn(|k| Approach::ALL[(ego.ordinal() + k) % 4])
}

/// Observation of vehicle `i`.
pub fn observe(world: &World, i: usize) -> Observation {
    let model = world.model();
    let cfg = world.config();
    let ego = &world.vehicles()[i];
    let order = relative_approaches(model.lanes[ego.start_lane].approach);
    let mut queue = [0.0; 4];
    let mut wait = [0.0; 4];
    let mut occupied = false;
    for v in world.vehicles() {
        occupied |= v.occupies_box();
        if v.phase != VehiclePhase::Approaching {
            continue;
        }
        let a = model.lanes[v.start_lane].approach;
        let k = order.iter().position(|&o| o == a).expect("four approaches");
        if v.speed < WAIT_SPEED {
            queue[k] += 1.0;
        }
        wait[k] += v.waiting_accum;
    }
    let mut obs = [0.0; OBS_DIM];
    for k in 0..4 {
        obs[k] = (queue[k] / QUEUE_SCALE).min(FEATURE_CLIP);
        obs[4 + k] = (wait[k] / WAIT_SCALE).min(FEATURE_CLIP);
    }
    obs[8] = if occupied { 1.0 } else { 0.0 };
    obs[9] = (ego.to_stop_line() / cfg.rv_zone).clamp(0.0, FEATURE_CLIP);
    obs[10] = (ego.speed / cfg.idm.v0).clamp(0.0, FEATURE_CLIP);
    obs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub wait_cap: f64,
    pub discharge_weight: f64,
    pub discharge_scale: f64,
    pub conflict_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            wait_cap: 60.0,
            discharge_weight: 0.25,
            discharge_scale: 5.0,
            conflict_penalty: 5.0,
        }
    }
}

/// Reward for the interval between two consecutive decisions.
pub fn reward(before: &ZoneStats, after: &ZoneStats, cfg: &RewardConfig) -> f64 {
    let wait = after.zone_wait.clamp(0.0, cfg.wait_cap) / cfg.wait_cap;
    let discharged = after.discharged.saturating_sub(before.discharged) as f64;
    let conflict = if after.conflicts > before.conflicts {
        cfg.conflict_penalty
    } else {
        0.0
    };
    -wait + cfg.discharge_weight * discharged / cfg.discharge_scale - conflict
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub iterations: usize,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Gradient steps after each collected episode.
    pub updates_per_iteration: usize,
    /// Transitions required before learning starts.
    pub warmup: usize,
    /// Target network is copied from the online one every this many iterations.
    pub target_sync: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of iterations over which epsilon decays linearly.
    pub epsilon_fraction: f64,
    /// Global gradient norm clip; zero disables clipping.
    pub max_grad_norm: f64,
    /// Simulated seconds per episode.
    pub episode_duration: f64,
    /// Seconds between decisions of one vehicle.
    pub decision_interval: f64,
    pub seed: u64,
    pub reward: RewardConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            discount: 0.99,
            iterations: 1000,
            hidden: vec![512; 3],
            buffer_capacity: 100_000,
            batch_size: 64,
            updates_per_iteration: 8,
            warmup: 256,
            target_sync: 10,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.6,
            max_grad_norm: 10.0,
            episode_duration: 300.0,
            decision_interval: 1.0,
            seed: 0,
            reward: RewardConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1)");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with positive widths");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity must be at least batch_size > 0");
        }
        if self.target_sync == 0 {
            return bad("target_sync must be > 0");
        }
        if !(self.episode_duration > 0.0) || !(self.decision_interval > 0.0) {
            return bad("episode_duration and decision_interval must be > 0");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_fraction) || !(self.max_grad_norm >= 0.0) {
            return bad("epsilon_fraction must lie in [0, 1] and max_grad_norm be >= 0");
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![OBS_DIM];
        s.extend(&self.hidden);
        s.push(N_ACTIONS);
        s
    }

    /// Exploration rate at iteration `it`.
    pub fn epsilon(&self, it: usize) -> f64 {
        let span = self.epsilon_fraction * self.iterations as f64;
        if span <= 0.0 {
            return self.epsilon_end;
        }
        let f = (it as f64 / span).min(1.0);
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }
}

/// Central-difference check of the network's backpropagation.
pub fn finite_difference_check(net: &Mlp, obs: &[f64], tolerance: f64) -> bool {
    gradient_check_with(net, obs, tolerance, 0, &|n, c, d| n.backward(c, d))
}
