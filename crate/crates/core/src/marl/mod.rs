//! Multi-agent deep deterministic policy gradient with the safety shield
//! placed between action selection and execution.

pub mod adam;
pub mod buffer;
pub mod checkpoint;
pub mod learn;
pub mod mlp;
pub mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::shield::ShieldError;

pub use adam::{Adam, AdamConfig};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use learn::{actor_update, critic_update, td_target, Actor, Critic, QFunction, StepRules};
pub use mlp::{soft_update, Activation, Dense, Gradients, Mlp};
pub use trainer::{
    rollout, safe_actions, train, Learner, Maddpg, RolloutEpisode, TrainObserver, TrainOutcome, UpdateStats,
};

#[derive(Debug, Error)]
pub enum MarlError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("training diverged in episode {episode}: {source}")]
    Divergence {
        episode: usize,
        #[source]
        source: Box<MarlError>,
    },
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub episodes: usize,
    pub episode_length: usize,
    pub batch_size: usize,
    pub gamma: f64,
    /// Multiplies rewards before they enter the replay buffer. Reported
    /// rewards are unscaled.
    pub reward_scale: f64,
    /// Soft-update rate for the target networks.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub noise_std: f64,
    /// Multiplies the noise scale once per episode.
    pub noise_decay: f64,
    /// Penalty on the actor's squared output pre-activation.
    pub preact_reg: f64,
    /// Global gradient-norm cap for both networks; `null` disables it.
    pub grad_clip: Option<f64>,
    pub update_every: usize,
    pub warmup: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            episode_length: 200,
            batch_size: 256,
            gamma: 0.95,
            reward_scale: 1.0,
            tau: 0.01,
            actor_lr: 1e-5,
            critic_lr: 1e-3,
            noise_std: 0.1,
            noise_decay: 0.9995,
            preact_reg: 0.0,
            grad_clip: None,
            update_every: 4,
            warmup: 1000,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), MarlError> {
        let bad = |m: &str| Err(MarlError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive and finite");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad("batch_size must be positive and at most buffer_capacity");
        }
        if self.episode_length == 0 || self.update_every == 0 {
            return bad("episode_length and update_every must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) || !self.actor_lr.is_finite() || !self.critic_lr.is_finite() {
            return bad("learning rates must be positive and finite");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !(0.0..=1.0).contains(&self.noise_decay) {
            return bad("noise_std must be non-negative and noise_decay in [0, 1]");
        }
        if !(self.preact_reg >= 0.0 && self.preact_reg.is_finite()) {
            return bad("preact_reg must be non-negative and finite");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return bad("grad_clip must be positive and finite");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}
