//! Soft actor-critic with a symmetry-regularized policy.

pub mod nn;
pub mod policy;
pub mod replay;
pub mod sac;
pub mod toy;
pub mod train;

pub use nn::{Adam, Matrix, Mlp};
pub use policy::Policy;
pub use replay::ReplayBuffer;
pub use sac::{mirror_deviation, Agent, Checkpoint, LossReport, SacConfig, CHECKPOINT_VERSION};
pub use toy::{slip_apex_toy_env, ApexToyConfig, SlipApexEnv};
pub use train::{evaluate, run_episode, train, CurveRow, EpisodeStats, EvalRow, TrainConfig, TrainOutcome};

use crate::env::EnvError;
use crate::symmetry::SymmetryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("invalid learner config: {0}")]
    Config(&'static str),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("non-finite {what} at update {update}")]
    Diverged { update: u64, what: &'static str },
    #[error("replay buffer holds {len} transitions, batch needs {batch}")]
    BufferTooSmall { len: usize, batch: usize },
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}
