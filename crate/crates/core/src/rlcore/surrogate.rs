use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateKind {
    /// `log π(a|s) · A`
    Vpg,
    /// `min(ρ A, clip(ρ, 1−ε, 1+ε) A)` with `ρ = π/π_old`
    Ppo,
    /// `ρ A`
    Cpi,
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurrogateKind::Vpg => "vpg",
            SurrogateKind::Ppo => "ppo",
            SurrogateKind::Cpi => "cpi",
        })
    }
}

impl FromStr for SurrogateKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vpg" => Ok(SurrogateKind::Vpg),
            "ppo" => Ok(SurrogateKind::Ppo),
            "cpi" => Ok(SurrogateKind::Cpi),
            other => Err(format!("unknown surrogate `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub clip: f64,
    pub ent_coeff: f64,
}

/// Per-sample objective `[n]` (to be maximised).
///
/// `log_probs` is `[n, A]` under the current parameters; `old_log_probs` are
/// the sampling-time log-probabilities of the taken actions.
pub fn surrogate_objective<'t>(
    log_probs: Var<'t>,
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    kind: SurrogateKind,
    clip: f64,
) -> Var<'t> {
    let n = actions.len();
    assert_eq!(old_log_probs.len(), n, "one old log-prob per action");
    assert_eq!(advantages.len(), n, "one advantage per action");
    let tape = log_probs.tape();
    let adv = tape.constant(Tensor::vector(advantages.to_vec()));
    let lp = log_probs.gather_rows(actions);
    match kind {
        SurrogateKind::Vpg => lp * adv,
        SurrogateKind::Cpi | SurrogateKind::Ppo => {
            let ratio = (lp - tape.constant(Tensor::vector(old_log_probs.to_vec()))).exp();
            let unclipped = ratio * adv;
            if kind == SurrogateKind::Cpi {
                unclipped
            } else {
                unclipped.minimum(ratio.clip(1.0 - clip, 1.0 + clip) * adv)
            }
        }
    }
}

/// Per-row entropy `[n]` of a batch of log-probability rows `[n, A]`.
pub fn entropy<'t>(log_probs: Var<'t>) -> Var<'t> {
    (log_probs.exp() * log_probs).sum_last().scale(-1.0)
}

/// `−weight · Σ_t (objective_t + ent_coeff · H_t)`.
pub fn surrogate_loss_weighted<'t>(
    log_probs: Var<'t>,
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    spec: SurrogateSpec,
    weight: f64,
) -> Var<'t> {
    let obj = surrogate_objective(log_probs, actions, old_log_probs, advantages, spec.kind, spec.clip);
    let total = if spec.ent_coeff != 0.0 {
        obj.sum() + entropy(log_probs).sum().scale(spec.ent_coeff)
    } else {
        obj.sum()
    };
    total.scale(-weight)
}

/// Mean-reduced surrogate loss: `−mean(objective) − ent_coeff · mean(H)`.
pub fn surrogate_loss<'t>(
    log_probs: Var<'t>,
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    spec: SurrogateSpec,
) -> Var<'t> {
    let n = actions.len();
    assert!(n > 0, "empty surrogate batch");
    surrogate_loss_weighted(log_probs, actions, old_log_probs, advantages, spec, 1.0 / n as f64)
}
