//! Single-task policy-gradient machinery: rollouts, returns and advantages,
//! surrogate losses and optimizers.

mod optim;
mod returns;
mod rollout;
mod surrogate;
mod trajectory;

pub use optim::{clip_grad_norm, optimizer_step, sgd_step, sgd_step_vars, Adam, NonFiniteGradient, OptimizerKind};
pub use returns::{discounted_returns, gae_advantages, masked_returns, normalize_advantages, AdvantageBatch};
pub use rollout::{check_log_probs, collect_rollout, RolloutError};
pub use surrogate::{
    entropy, surrogate_loss, surrogate_loss_weighted, surrogate_objective, SurrogateKind, SurrogateSpec,
};
pub use trajectory::Trajectory;
