//! MAML and E-MAML outer surrogates.
//!
//! Each task contributes
//!
//! ```text
//! L_i = −1/(N·M_i) Σ_τ Σ_t A_t log π_{θ′}(a_t|s_t)          (exploit term)
//!       − λ/N · c_i · Σ_τ̄ Σ_t log π_θ(ā_t|s̄_t)              (explore term)
//! ```
//!
//! where `M_i` is the number of exploit episodes and `c_i` the detached
//! exploit return of the task. The exploit term uses the configured outer
//! surrogate (the PPO ratio is taken against the sampling-time log-probs).

use rayon::prelude::*;

use super::batch::{episode_return, mean, raw_advantages, stack};
use super::config::{Algo, CreditMode, InnerConfig, MetaConfig};
use super::inner::{adapted_vars, batch_values, Adaptation};
use super::MetaError;
use crate::autodiff::{Tape, Tensor, Var};
use crate::policy::{MlpPolicy, ParamVector};
use crate::rlcore::{discounted_returns, normalize_advantages, surrogate_loss_weighted, Trajectory};

/// Everything sampled for one task in one meta-iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSample {
    pub task_id: usize,
    pub adaptation: Adaptation,
    /// Episodes sampled under θ′.
    pub exploit: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetaBatch {
    pub tasks: Vec<TaskSample>,
}

/// Detached per-task quantities computed once per meta-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    /// Exploit advantages per task, concatenated over its exploit episodes.
    pub exploit_advantages: Vec<Vec<f64>>,
    /// Mean discounted exploit return per task.
    pub returns: Vec<f64>,
    /// Coefficient on the task's explore log-likelihood.
    pub coefficients: Vec<f64>,
}

/// Advantages (normalised across the whole meta-batch when configured) and
/// explore coefficients.
pub fn prepare(policy: &MlpPolicy, batch: &MetaBatch, meta: &MetaConfig) -> Prepared {
    let raw: Vec<Vec<f64>> = batch
        .tasks
        .iter()
        .map(|s| {
            let values = batch_values(policy, &s.adaptation.theta_prime, &s.exploit, meta);
            raw_advantages(&s.exploit, meta, values.as_deref())
        })
        .collect();
    let exploit_advantages = if meta.normalize_advantages {
        let flat = normalize_advantages(raw.concat()).advantages;
        let mut offset = 0;
        raw.iter()
            .map(|r| {
                let part = flat[offset..offset + r.len()].to_vec();
                offset += r.len();
                part
            })
            .collect()
    } else {
        raw
    };
    let returns: Vec<f64> = batch
        .tasks
        .iter()
        .map(|s| mean(s.exploit.iter().map(|t| episode_return(t, meta.gamma))))
        .collect();
    let n = returns.len();
    let coefficients = match meta.credit_mode {
        CreditMode::DiceScalar => returns.clone(),
        CreditMode::PerTimestep if n < 2 => returns.clone(),
        CreditMode::PerTimestep => {
            let total: f64 = returns.iter().sum();
            returns.iter().map(|r| r - (total - r) / (n - 1) as f64).collect()
        }
    };
    Prepared { exploit_advantages, returns, coefficients }
}

/// Exploit term of one task: outer surrogate on the exploit episodes under
/// `theta_prime`, weighted by `1/(N·M_i)`.
pub fn exploit_term<'t>(
    policy: &MlpPolicy,
    theta_prime: &[Var<'t>],
    sample: &TaskSample,
    advantages: &[f64],
    meta: &MetaConfig,
    n_tasks: usize,
) -> Var<'t> {
    let tape = theta_prime[0].tape();
    let s = stack(&sample.exploit);
    let weight = 1.0 / (n_tasks * sample.exploit.len()) as f64;
    let (logits, values) = policy.forward(theta_prime, s.obs_var(tape));
    let mut loss =
        surrogate_loss_weighted(logits.log_softmax(), &s.actions, &s.old_log_probs, advantages, meta.outer_spec(), weight);
    if let (Some(v), true) = (values, meta.vf_coeff > 0.0) {
        let targets: Vec<f64> = sample.exploit.iter().flat_map(|t| discounted_returns(&t.rewards, meta.gamma)).collect();
        let err = v - tape.constant(Tensor::vector(targets));
        loss = loss + (err * err).sum().scale(meta.vf_coeff * weight);
    }
    loss
}

/// Explore term of one task. `sampling[k]` are the parameters explore batch
/// `k` was drawn under.
///
/// In `dice_scalar` mode the result is literally `const · Σ log π`; in
/// `per_timestep` mode every explore timestep carries its own coefficient
/// entry.
pub fn exploration_term<'t>(
    policy: &MlpPolicy,
    sampling: &[Vec<Var<'t>>],
    adaptation: &Adaptation,
    coefficient: f64,
    meta: &MetaConfig,
    n_tasks: usize,
) -> Var<'t> {
    let tape = sampling[0][0].tape();
    let parts: Vec<Var<'t>> = sampling
        .iter()
        .zip(&adaptation.batches)
        .map(|(theta_k, batch)| {
            let s = stack(batch);
            policy.log_probs(theta_k, s.obs_var(tape)).gather_rows(&s.actions)
        })
        .collect();
    let lp = if parts.len() == 1 { parts[0] } else { Var::concat(&parts, 0) };
    let scale = -meta.lambda_explore / n_tasks as f64;
    match meta.credit_mode {
        CreditMode::DiceScalar => tape.scalar(scale * coefficient) * lp.sum(),
        CreditMode::PerTimestep => {
            let n = lp.shape()[0];
            (lp * tape.constant(Tensor::vector(vec![coefficient; n]))).sum().scale(scale)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn task_loss<'t>(
    algo: Algo,
    policy: &MlpPolicy,
    theta: &[Var<'t>],
    schema: &ParamVector,
    batch: &MetaBatch,
    prepared: &Prepared,
    i: usize,
    inner: &InnerConfig,
    meta: &MetaConfig,
    strict: bool,
) -> Result<Var<'t>, MetaError> {
    let sample = &batch.tasks[i];
    if strict && !sample.adaptation.is_connected() {
        return Err(MetaError::Disconnected { kind: inner.kind });
    }
    let n = batch.tasks.len();
    let av = adapted_vars(policy, theta, schema, &sample.adaptation, inner, meta)?;
    let mut loss = exploit_term(policy, &av.theta_prime, sample, &prepared.exploit_advantages[i], meta, n);
    if algo == Algo::Emaml && meta.lambda_explore != 0.0 {
        loss = loss + exploration_term(policy, &av.sampling, &sample.adaptation, prepared.coefficients[i], meta, n);
    }
    Ok(loss)
}

fn batch_loss<'t>(
    algo: Algo,
    policy: &MlpPolicy,
    theta: &[Var<'t>],
    schema: &ParamVector,
    batch: &MetaBatch,
    inner: &InnerConfig,
    meta: &MetaConfig,
) -> Result<Var<'t>, MetaError> {
    assert!(!batch.tasks.is_empty(), "empty meta-batch");
    let prepared = prepare(policy, batch, meta);
    let mut total: Option<Var<'t>> = None;
    for i in 0..batch.tasks.len() {
        let l = task_loss(algo, policy, theta, schema, batch, &prepared, i, inner, meta, true)?;
        total = Some(match total {
            Some(t) => t + l,
            None => l,
        });
    }
    Ok(total.expect("non-empty batch"))
}

/// MAML loss on one tape; θ′ must be tape-connected to `theta`.
pub fn maml_surrogate<'t>(
    policy: &MlpPolicy,
    theta: &[Var<'t>],
    schema: &ParamVector,
    batch: &MetaBatch,
    inner: &InnerConfig,
    meta: &MetaConfig,
) -> Result<Var<'t>, MetaError> {
    batch_loss(Algo::Maml, policy, theta, schema, batch, inner, meta)
}

/// MAML loss plus `λ` times the exploration term.
pub fn emaml_surrogate<'t>(
    policy: &MlpPolicy,
    theta: &[Var<'t>],
    schema: &ParamVector,
    batch: &MetaBatch,
    inner: &InnerConfig,
    meta: &MetaConfig,
) -> Result<Var<'t>, MetaError> {
    batch_loss(Algo::Emaml, policy, theta, schema, batch, inner, meta)
}

/// Meta-gradient of the batch loss, computed task by task on separate tapes
/// in parallel and summed in task order. Non-differentiable operators are
/// treated straight-through. Returns `(gradient, loss)`.
pub fn meta_gradient(
    algo: Algo,
    policy: &MlpPolicy,
    theta: &ParamVector,
    batch: &MetaBatch,
    prepared: &Prepared,
    inner: &InnerConfig,
    meta: &MetaConfig,
) -> Result<(ParamVector, f64), MetaError> {
    assert!(!algo.is_recurrent(), "meta_gradient handles the feed-forward algorithms");
    let per_task: Vec<Result<(Vec<Tensor>, f64), MetaError>> = (0..batch.tasks.len())
        .into_par_iter()
        .map(|i| {
            let tape = Tape::new();
            let vars = theta.to_params(&tape);
            let loss = task_loss(algo, policy, &vars, theta, batch, prepared, i, inner, meta, false)?;
            let value = loss.item();
            let grads = tape.grad(loss, &vars)?;
            Ok((grads, value))
        })
        .collect();
    let mut total = theta.zeros_like();
    let mut loss = 0.0;
    for r in per_task {
        let (g, l) = r?;
        total = total.add(&theta.with_tensors(g));
        loss += l;
    }
    Ok((total, loss))
}
