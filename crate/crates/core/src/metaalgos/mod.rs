//! Meta-learning algorithms: the inner operator family, the MAML and E-MAML
//! surrogates, RL² and E-RL² trials, and the outer meta step.

mod batch;
mod config;
mod inner;
mod rl2;
mod step;
mod surrogate;

pub use config::{Algo, ConfigError, CreditMode, InnerConfig, MetaConfig, OperatorKind};
pub use inner::{adapt, adapted_vars, inner_loss, perpendicular_direction, Adaptation, AdaptedVars, InnerOutcome};
pub use rl2::{rl2_gradient, rl2_trial, trial_advantages, trial_loss, trial_returns, Trial};
pub use step::{collect_task_sample, collect_trial, IterStats, MetaLearner, PolicyKind, Streams};
pub use surrogate::{
    emaml_surrogate, exploit_term, exploration_term, maml_surrogate, meta_gradient, prepare, MetaBatch, Prepared,
    TaskSample,
};

use crate::autodiff::NumericFault;
use crate::envs::EnvError;
use crate::rlcore::{NonFiniteGradient, RolloutError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetaError {
    #[error(transparent)]
    Numeric(#[from] NumericFault),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Gradient(#[from] NonFiniteGradient),
    /// The MAML surrogate needs θ′ connected to θ on the tape.
    #[error("operator `{kind}` does not keep θ′ connected to θ; the MAML surrogate is undefined for it")]
    Disconnected { kind: OperatorKind },
}
