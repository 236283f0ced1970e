//! The inner update operator θ′ = U(θ).

use rand::Rng;
use rand_distr::StandardNormal;

use super::batch::{batch_advantages, stack};
use super::config::{InnerConfig, MetaConfig, OperatorKind};
use super::MetaError;
use crate::autodiff::{NumericFault, Tape, Var};
use crate::policy::{MlpPolicy, ParamVector};
use crate::rlcore::{sgd_step_vars, surrogate_loss, SurrogateKind, SurrogateSpec, Trajectory};

/// How θ′ was obtained from θ.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerOutcome {
    /// Differentiable SGD steps on the explore batches.
    Gradient,
    /// A fixed offset `θ′ − θ`; the tape sees θ′ = θ + const.
    Offset(ParamVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adaptation {
    /// Explore batches, one per inner step (one in total with simple sampling).
    pub batches: Vec<Vec<Trajectory>>,
    pub outcome: InnerOutcome,
    pub theta_prime: ParamVector,
}

impl Adaptation {
    pub fn is_connected(&self) -> bool {
        matches!(self.outcome, InnerOutcome::Gradient)
    }
}

/// Per-step values under frozen parameters, when the policy has a value head
/// and GAE is enabled.
pub(crate) fn batch_values(
    policy: &MlpPolicy,
    params: &ParamVector,
    batch: &[Trajectory],
    cfg: &MetaConfig,
) -> Option<Vec<Vec<f64>>> {
    (cfg.use_gae && policy.value_head).then(|| {
        batch
            .iter()
            .map(|t| t.observations.iter().map(|o| policy.value(params, o).unwrap_or(0.0)).collect())
            .collect()
    })
}

/// Inner surrogate on one explore batch. `sgd_ppo` uses the clipped ratio
/// against the sampling-time log-probabilities; every other kind uses VPG.
pub fn inner_loss<'t>(
    policy: &MlpPolicy,
    theta: &[Var<'t>],
    theta_value: &ParamVector,
    batch: &[Trajectory],
    inner: &InnerConfig,
    meta: &MetaConfig,
) -> Var<'t> {
    assert!(batch.iter().any(|t| !t.is_empty()), "empty explore batch");
    let tape = theta[0].tape();
    let s = stack(batch);
    let values = batch_values(policy, theta_value, batch, meta);
    let adv = batch_advantages(batch, meta, values.as_deref());
    let kind = if inner.kind == OperatorKind::SgdPpo { SurrogateKind::Ppo } else { SurrogateKind::Vpg };
    let spec = SurrogateSpec { kind, clip: meta.clip, ent_coeff: 0.0 };
    let lp = policy.log_probs(theta, s.obs_var(tape));
    surrogate_loss(lp, &s.actions, &s.old_log_probs, &adv, spec)
}

fn values_of(vars: &[Var<'_>], schema: &ParamVector) -> ParamVector {
    schema.with_tensors(vars.iter().map(|v| v.value()).collect())
}

fn gradient_values(
    policy: &MlpPolicy,
    theta: &ParamVector,
    batch: &[Trajectory],
    inner: &InnerConfig,
    meta: &MetaConfig,
) -> Result<ParamVector, NumericFault> {
    let tape = Tape::new();
    let vars = theta.to_params(&tape);
    let loss = inner_loss(policy, &vars, theta, batch, inner, meta);
    Ok(theta.with_tensors(tape.grad(loss, &vars)?))
}

/// Unit vector orthogonal to `g`: the normalised all-ones direction with its
/// component along `g` removed. Falls back to the ones direction when `g` is
/// zero or parallel to it.
pub fn perpendicular_direction(g: &ParamVector) -> ParamVector {
    let n = g.total_len() as f64;
    let ones = g.map(|_| 1.0 / n.sqrt());
    let gg = g.dot(g);
    if gg == 0.0 {
        return ones;
    }
    let u = ones.sub(&g.scale(ones.dot(g) / gg));
    let norm = u.norm();
    if norm < 1e-12 {
        // g is parallel to ones: use a direction with alternating signs.
        let alt = g.unflatten(&(0..g.total_len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>());
        let u = alt.sub(&g.scale(alt.dot(g) / gg));
        return u.scale(1.0 / u.norm());
    }
    u.scale(1.0 / norm)
}

fn gaussian<R: Rng + ?Sized>(like: &ParamVector, sigma: f64, rng: &mut R) -> ParamVector {
    let draws: Vec<f64> = (0..like.total_len()).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    like.unflatten(&draws)
}

/// Runs the inner operator. `sampler(k, θ_k)` supplies the explore batch for
/// inner step `k` sampled under `θ_k`; with simple sampling it is called once.
/// `rng` drives only the operator's own randomness.
pub fn adapt<R, S>(
    policy: &MlpPolicy,
    theta: &ParamVector,
    inner: &InnerConfig,
    meta: &MetaConfig,
    rng: &mut R,
    mut sampler: S,
) -> Result<Adaptation, MetaError>
where
    R: Rng + ?Sized,
    S: FnMut(usize, &ParamVector) -> Result<Vec<Trajectory>, MetaError>,
{
    let first = sampler(0, theta)?;
    let offset = |delta: ParamVector, batches: Vec<Vec<Trajectory>>| Adaptation {
        theta_prime: theta.add(&delta),
        outcome: InnerOutcome::Offset(delta),
        batches,
    };
    match inner.kind {
        OperatorKind::RandomPerturb => return Ok(offset(gaussian(theta, inner.sigma, rng), vec![first])),
        OperatorKind::EpsGreedy => {
            let u: f64 = rng.random();
            if u < inner.eps {
                return Ok(offset(gaussian(theta, inner.sigma, rng), vec![first]));
            }
        }
        OperatorKind::SignFlip => {
            let g = gradient_values(policy, theta, &first, inner, meta)?;
            return Ok(offset(g.scale(inner.alpha), vec![first]));
        }
        OperatorKind::Perpendicular => {
            let g = gradient_values(policy, theta, &first, inner, meta)?;
            return Ok(offset(perpendicular_direction(&g).scale(-inner.alpha), vec![first]));
        }
        OperatorKind::SgdVpg | OperatorKind::SgdPpo => {}
    }
    let mut batches = vec![first];
    let tape = Tape::new();
    let mut vars = theta.to_params(&tape);
    let mut current = theta.clone();
    for k in 0..inner.steps {
        if k > 0 && !inner.simple_sampling {
            batches.push(sampler(k, &current)?);
        }
        let batch = batches.last().expect("at least one batch");
        let loss = inner_loss(policy, &vars, &current, batch, inner, meta);
        let grads = tape.grad_graph(loss, &vars)?;
        vars = sgd_step_vars(&vars, &grads, inner.alpha);
        current = values_of(&vars, theta);
    }
    tape.check()?;
    Ok(Adaptation { batches, outcome: InnerOutcome::Gradient, theta_prime: current })
}

/// θ′ rebuilt on `theta`'s tape, plus the parameters each explore batch was
/// sampled under (needed for the exploration term).
pub struct AdaptedVars<'t> {
    pub theta_prime: Vec<Var<'t>>,
    pub sampling: Vec<Vec<Var<'t>>>,
}

pub fn adapted_vars<'t>(
    policy: &MlpPolicy,
    theta: &[Var<'t>],
    schema: &ParamVector,
    adaptation: &Adaptation,
    inner: &InnerConfig,
    meta: &MetaConfig,
) -> Result<AdaptedVars<'t>, NumericFault> {
    let tape = theta[0].tape();
    match &adaptation.outcome {
        InnerOutcome::Offset(delta) => {
            let theta_prime = theta
                .iter()
                .zip(delta.tensors())
                .map(|(&t, d)| t + tape.constant(d))
                .collect();
            Ok(AdaptedVars { theta_prime, sampling: vec![theta.to_vec()] })
        }
        InnerOutcome::Gradient => {
            let mut vars = theta.to_vec();
            let mut sampling = Vec::new();
            for k in 0..inner.steps {
                let b = if inner.simple_sampling { 0 } else { k };
                if sampling.len() == b {
                    sampling.push(vars.clone());
                }
                let current = values_of(&vars, schema);
                let loss = inner_loss(policy, &vars, &current, &adaptation.batches[b], inner, meta);
                let grads = tape.grad_graph(loss, &vars)?;
                vars = sgd_step_vars(&vars, &grads, inner.alpha);
            }
            Ok(AdaptedVars { theta_prime: vars, sampling })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::rng;

    /// Bandit: no observation features, a single bias per action.
    fn bandit() -> (MlpPolicy, ParamVector) {
        let policy = MlpPolicy::new(1, 2, vec![]);
        let mut theta = policy.zeros();
        theta = theta.with_tensors(vec![Tensor::matrix(1, 2, vec![0.0, 0.0]), Tensor::vector(vec![0.3, -0.2])]);
        (policy, theta)
    }

    fn pull(action: usize, reward: f64, lp: f64) -> Trajectory {
        let mut t = Trajectory::new(0, true);
        t.push(vec![0.0], action, lp, reward, true);
        t
    }

    fn plain_meta() -> MetaConfig {
        MetaConfig { normalize_advantages: false, ..MetaConfig::default() }
    }

    #[test]
    fn sgd_vpg_matches_closed_form_bandit_step() {
        let (policy, theta) = bandit();
        let batch = vec![pull(0, 1.0, 0.0), pull(1, 2.0, 0.0)];
        let inner = InnerConfig::default();
        let out = adapt(&policy, &theta, &inner, &plain_meta(), &mut rng::seeded(0), |_, _| Ok(batch.clone())).unwrap();
        // L = −½ (1·log π₀ + 2·log π₁); ∂ log π_a / ∂b_k = 1[a=k] − π_k.
        let b = [0.3f64, -0.2];
        let z = b[0].exp() + b[1].exp();
        let pi = [b[0].exp() / z, b[1].exp() / z];
        let grad: Vec<f64> = (0..2)
            .map(|k| -0.5 * (1.0 * (f64::from(k == 0) - pi[k]) + 2.0 * (f64::from(k == 1) - pi[k])))
            .collect();
        let got = out.theta_prime.get("b_out").unwrap().data().to_vec();
        for k in 0..2 {
            assert!((got[k] - (b[k] - 0.01 * grad[k])).abs() < 1e-12);
        }
        assert!(out.is_connected());
    }

    #[test]
    fn eps_greedy_with_zero_eps_is_sgd_vpg() {
        let (policy, theta) = bandit();
        let batch = vec![pull(0, 1.0, -0.6), pull(1, 0.5, -0.8)];
        let meta = MetaConfig::default();
        let sgd = adapt(&policy, &theta, &InnerConfig::default(), &meta, &mut rng::seeded(7), |_, _| Ok(batch.clone()))
            .unwrap();
        let eps = InnerConfig { kind: OperatorKind::EpsGreedy, eps: 0.0, ..InnerConfig::default() };
        let got = adapt(&policy, &theta, &eps, &meta, &mut rng::seeded(7), |_, _| Ok(batch.clone())).unwrap();
        assert_eq!(sgd.theta_prime.flatten(), got.theta_prime.flatten());
    }

    #[test]
    fn perpendicular_step_is_orthogonal_to_the_gradient() {
        let (policy, theta) = bandit();
        let batch = vec![pull(0, 1.0, -0.6), pull(1, 3.0, -0.8)];
        let inner = InnerConfig { kind: OperatorKind::Perpendicular, ..InnerConfig::default() };
        let meta = plain_meta();
        let out = adapt(&policy, &theta, &inner, &meta, &mut rng::seeded(0), |_, _| Ok(batch.clone())).unwrap();
        let g = gradient_values(&policy, &theta, &batch, &inner, &meta).unwrap();
        let step = out.theta_prime.sub(&theta);
        assert!(step.dot(&g).abs() < 1e-10);
        assert!((step.norm() - inner.alpha).abs() < 1e-12);
        assert!(!out.is_connected());
    }

    #[test]
    fn sign_flip_ascends_the_inner_loss() {
        let (policy, theta) = bandit();
        let batch = vec![pull(0, 1.0, -0.6), pull(1, 3.0, -0.8)];
        let meta = plain_meta();
        let sgd = adapt(&policy, &theta, &InnerConfig::default(), &meta, &mut rng::seeded(0), |_, _| Ok(batch.clone()))
            .unwrap();
        let flip = InnerConfig { kind: OperatorKind::SignFlip, ..InnerConfig::default() };
        let out = adapt(&policy, &theta, &flip, &meta, &mut rng::seeded(0), |_, _| Ok(batch.clone())).unwrap();
        let a = sgd.theta_prime.sub(&theta).flatten();
        let b = out.theta_prime.sub(&theta).flatten();
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() < 1e-15);
        }
    }

    #[test]
    fn random_perturb_has_requested_scale() {
        let policy = MlpPolicy::new(4, 4, vec![32]);
        let theta = policy.zeros();
        let batch = vec![{
            let mut t = Trajectory::new(0, true);
            t.push(vec![0.0; 4], 0, -1.0, 0.0, true);
            t
        }];
        let inner = InnerConfig { kind: OperatorKind::RandomPerturb, sigma: 0.5, ..InnerConfig::default() };
        let out = adapt(&policy, &theta, &inner, &plain_meta(), &mut rng::seeded(0), |_, _| Ok(batch.clone())).unwrap();
        let d = out.theta_prime.flatten();
        let var = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.05);
    }

    #[test]
    fn fresh_sampling_draws_one_batch_per_step() {
        let (policy, theta) = bandit();
        let inner = InnerConfig { steps: 3, simple_sampling: false, ..InnerConfig::default() };
        let mut seen = Vec::new();
        let out = adapt(&policy, &theta, &inner, &plain_meta(), &mut rng::seeded(0), |k, th| {
            seen.push((k, th.flatten()));
            Ok(vec![pull(k % 2, 1.0, -0.7)])
        })
        .unwrap();
        assert_eq!(out.batches.len(), 3);
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_ne!(seen[0].1, seen[1].1);
        // Replaying on a tape reproduces θ′.
        let tape = Tape::new();
        let vars = theta.to_params(&tape);
        let av = adapted_vars(&policy, &vars, &theta, &out, &inner, &plain_meta()).unwrap();
        let replay: Vec<f64> = av.theta_prime.iter().flat_map(|v| v.value().into_vec()).collect();
        assert_eq!(replay, out.theta_prime.flatten());
        assert_eq!(av.sampling.len(), 3);
    }
}
