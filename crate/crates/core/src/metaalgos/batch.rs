//! Trajectory batches as tape inputs.

use crate::autodiff::{Tape, Tensor, Var};
use crate::rlcore::{discounted_returns, gae_advantages, normalize_advantages, Trajectory};

use super::config::MetaConfig;

/// Observations stacked as `[T, obs_len]` with the matching actions and
/// sampling-time log-probabilities.
pub(crate) struct Stacked {
    pub obs: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
}

pub(crate) fn stack(batch: &[Trajectory]) -> Stacked {
    let width = batch
        .iter()
        .find_map(|t| t.observations.first().map(Vec::len))
        .expect("batch has at least one step");
    let mut obs = Vec::new();
    let mut actions = Vec::new();
    let mut old_log_probs = Vec::new();
    for t in batch {
        for o in &t.observations {
            obs.extend_from_slice(o);
        }
        actions.extend_from_slice(&t.actions);
        old_log_probs.extend_from_slice(&t.log_probs);
    }
    let rows = actions.len();
    Stacked { obs: Tensor::matrix(rows, width, obs), actions, old_log_probs }
}

impl Stacked {
    pub fn obs_var<'t>(&self, tape: &'t Tape) -> Var<'t> {
        tape.constant(self.obs.clone())
    }
}

/// Per-step returns (or GAE advantages when `values` is given), concatenated
/// over the batch, before any normalisation.
pub(crate) fn raw_advantages(batch: &[Trajectory], cfg: &MetaConfig, values: Option<&[Vec<f64>]>) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, t) in batch.iter().enumerate() {
        match values {
            Some(v) if cfg.use_gae => out.extend(gae_advantages(&t.rewards, &v[i], cfg.gamma, cfg.gae_lambda)),
            _ => out.extend(discounted_returns(&t.rewards, cfg.gamma)),
        }
    }
    out
}

/// Advantages for one batch, normalised within the batch when configured.
pub(crate) fn batch_advantages(batch: &[Trajectory], cfg: &MetaConfig, values: Option<&[Vec<f64>]>) -> Vec<f64> {
    let raw = raw_advantages(batch, cfg, values);
    if cfg.normalize_advantages {
        normalize_advantages(raw).advantages
    } else {
        raw
    }
}

/// Discounted return from the first step.
pub(crate) fn episode_return(t: &Trajectory, gamma: f64) -> f64 {
    t.rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

pub(crate) fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
