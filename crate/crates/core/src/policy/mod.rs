//! Policies built on the autodiff tape: a feed-forward categorical policy for
//! MAML-style algorithms and a gated recurrent policy for RL².

mod checkpoint;
mod gru;
mod mlp;
mod params;
mod sampling;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use gru::{rl2_input, GruPolicy};
pub use mlp::MlpPolicy;
pub use params::{ParamVector, Segment};
pub use sampling::{sample_action, sample_from_log_probs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Hidden layer widths of the feed-forward policy.
    pub hidden: Vec<usize>,
    /// Hidden state size of the recurrent policy.
    pub gru_hidden: usize,
    /// Append a learned vector to every observation.
    pub bias_transform: bool,
    pub bias_len: usize,
    /// Adds a linear value head for GAE.
    pub value_head: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: vec![64, 64],
            gru_hidden: 64,
            bias_transform: false,
            bias_len: 4,
            value_head: false,
        }
    }
}

impl PolicyConfig {
    pub fn mlp(&self, obs_len: usize, n_actions: usize) -> MlpPolicy {
        MlpPolicy {
            obs_len,
            n_actions,
            hidden: self.hidden.clone(),
            bias_len: if self.bias_transform { self.bias_len } else { 0 },
            value_head: self.value_head,
        }
    }

    pub fn gru(&self, obs_len: usize, n_actions: usize) -> GruPolicy {
        GruPolicy::new(obs_len, n_actions, self.gru_hidden)
    }
}
