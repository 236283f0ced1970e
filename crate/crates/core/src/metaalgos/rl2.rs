//! RL² and E-RL² trials: several episodes of one task with the recurrent
//! state carried across episode boundaries.

use rand::Rng;
use rayon::prelude::*;

use super::config::{Algo, MetaConfig};
use super::MetaError;
use crate::autodiff::{Tape, Tensor, Var};
use crate::envs::Env;
use crate::policy::{rl2_input, sample_from_log_probs, GruPolicy, ParamVector};
use crate::rlcore::{check_log_probs, discounted_returns, masked_returns, normalize_advantages, surrogate_loss_weighted, RolloutError, SurrogateSpec, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub episodes: Vec<Trajectory>,
    /// Recurrent input fed at each step, per episode.
    pub inputs: Vec<Vec<Vec<f64>>>,
}

impl Trial {
    pub fn steps(&self) -> usize {
        self.episodes.iter().map(Trajectory::len).sum()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.episodes.iter().flat_map(|e| e.actions.iter().copied()).collect()
    }

    pub fn log_probs(&self) -> Vec<f64> {
        self.episodes.iter().flat_map(|e| e.log_probs.iter().copied()).collect()
    }
}

/// Runs `k` episodes on `env` under frozen `params`; the first `p` are
/// flagged explore. The hidden state starts at zero and is never reset inside
/// the trial. Episode boundaries are signalled through the done input.
#[allow(clippy::too_many_arguments)]
pub fn rl2_trial<R: Rng + ?Sized>(
    policy: &GruPolicy,
    params: &ParamVector,
    env: &mut Env,
    k: usize,
    p: usize,
    horizon: usize,
    rng: &mut R,
    task_id: usize,
) -> Result<Trial, RolloutError> {
    assert!(k > p, "a trial needs at least one exploit episode (k={k}, p={p})");
    let mut h = policy.initial_state();
    let mut prev: Option<(usize, f64, bool)> = None;
    let mut episodes = Vec::with_capacity(k);
    let mut inputs = Vec::with_capacity(k);
    for e in 0..k {
        let mut traj = Trajectory::new(task_id, e < p);
        let mut xs = Vec::new();
        let mut obs = env.reset(rng).data;
        for _ in 0..horizon {
            let x = rl2_input(&obs, prev, policy.n_actions);
            let (lp, h_next) = policy.act(params, &h, &x);
            h = h_next;
            check_log_probs(&lp, task_id)?;
            let (a, log_prob) = sample_from_log_probs(&lp, rng);
            let step = env.step(a).map_err(|source| RolloutError::Env { task_id, source })?;
            traj.info = step.info;
            traj.push(obs, a, log_prob, step.reward, step.done);
            xs.push(x);
            prev = Some((a, step.reward, step.done));
            obs = step.obs.data;
            if step.done {
                break;
            }
        }
        if let Some((a, r, _)) = prev {
            prev = Some((a, r, true));
        }
        episodes.push(traj);
        inputs.push(xs);
    }
    Ok(Trial { episodes, inputs })
}

/// Per-step return targets for one trial, flattened. RL² discounts over the
/// concatenated trial; E-RL² zeroes explore rewards first.
pub fn trial_returns(trial: &Trial, algo: Algo, gamma: f64) -> Vec<f64> {
    match algo {
        Algo::Erl2 => masked_returns(&trial.episodes, gamma).concat(),
        Algo::Rl2 => {
            let rewards: Vec<f64> = trial.episodes.iter().flat_map(|e| e.rewards.iter().copied()).collect();
            discounted_returns(&rewards, gamma)
        }
        _ => panic!("trial returns are defined for rl2 and erl2 only"),
    }
}

/// Advantages for every trial, normalised jointly across all trials when
/// configured.
pub fn trial_advantages(trials: &[Trial], algo: Algo, meta: &MetaConfig) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = trials.iter().map(|t| trial_returns(t, algo, meta.gamma)).collect();
    if !meta.normalize_advantages {
        return raw;
    }
    let flat = normalize_advantages(raw.concat()).advantages;
    let mut offset = 0;
    raw.iter()
        .map(|r| {
            let part = flat[offset..offset + r.len()].to_vec();
            offset += r.len();
            part
        })
        .collect()
}

/// Replays the trial on the tape and returns the weighted outer surrogate.
pub fn trial_loss<'t>(
    policy: &GruPolicy,
    params: &[Var<'t>],
    trial: &Trial,
    advantages: &[f64],
    spec: SurrogateSpec,
    weight: f64,
) -> Var<'t> {
    let tape = params[0].tape();
    let mut h = tape.constant(Tensor::matrix(1, policy.hidden, policy.initial_state()));
    let mut logits = Vec::with_capacity(trial.steps());
    for x in trial.inputs.iter().flatten() {
        let xv = tape.constant(Tensor::matrix(1, x.len(), x.clone()));
        let (l, h_next) = policy.step(params, h, xv);
        logits.push(l);
        h = h_next;
    }
    let lp = Var::concat(&logits, 0).log_softmax();
    surrogate_loss_weighted(lp, &trial.actions(), &trial.log_probs(), advantages, spec, weight)
}

/// Gradient of the mean per-step surrogate over all trials, one tape per
/// trial, summed in trial order. Returns `(gradient, loss)`.
pub fn rl2_gradient(
    policy: &GruPolicy,
    params: &ParamVector,
    trials: &[Trial],
    advantages: &[Vec<f64>],
    meta: &MetaConfig,
) -> Result<(ParamVector, f64), MetaError> {
    let total_steps: usize = trials.iter().map(Trial::steps).sum();
    assert!(total_steps > 0, "no trial steps");
    let weight = 1.0 / total_steps as f64;
    let spec = meta.outer_spec();
    let per_trial: Vec<Result<(Vec<Tensor>, f64), MetaError>> = trials
        .par_iter()
        .zip(advantages.par_iter())
        .map(|(trial, adv)| {
            let tape = Tape::new();
            let vars = params.to_params(&tape);
            let loss = trial_loss(policy, &vars, trial, adv, spec, weight);
            let value = loss.item();
            Ok((tape.grad(loss, &vars)?, value))
        })
        .collect();
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for r in per_trial {
        let (g, l) = r?;
        total = total.add(&params.with_tensors(g));
        loss += l;
    }
    Ok((total, loss))
}
