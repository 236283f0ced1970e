//! Exhaustive checks of the MAML and E-MAML estimators on a meta-MDP small
//! enough to enumerate every explore/exploit trajectory pair.
//!
//! Two tasks, two actions, two steps. The first state is `s0`; taking action
//! `a` moves to `s1 + a`. Observations are one-hot over the three states and
//! the policy is tabular (a single linear layer), so every probability and
//! adapted parameter can be written down on the tape.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Check;
use crate::autodiff::{finite_difference_check, Tape, Tensor, Var};
use crate::metaalgos::{
    adapt, exploration_term, inner_loss, maml_surrogate, meta_gradient, prepare, AdaptedVars, Algo,
    CreditMode, InnerConfig, MetaBatch, MetaConfig, OperatorKind, TaskSample,
};
use crate::policy::{MlpPolicy, ParamVector};
use crate::rlcore::{sgd_step_vars, SurrogateKind, Trajectory};
use crate::rng;

pub const N_TASKS: usize = 2;
pub const PATHS: [[usize; 2]; 4] = [[0, 0], [0, 1], [1, 0], [1, 1]];

/// `REWARDS[task][state][action]`. All positive, so that returns have a
/// large common offset across tasks.
pub const REWARDS: [[[f64; 2]; 3]; 2] = [
    [[1.0, 0.5], [2.0, 1.0], [0.5, 1.5]],
    [[0.5, 1.0], [1.0, 2.5], [2.0, 0.5]],
];

fn one_hot(state: usize) -> Vec<f64> {
    let mut o = vec![0.0; 3];
    o[state] = 1.0;
    o
}

fn states(path: [usize; 2]) -> [usize; 2] {
    [0, 1 + path[0]]
}

pub fn path_return(task: usize, path: [usize; 2]) -> f64 {
    let s = states(path);
    REWARDS[task][s[0]][path[0]] + REWARDS[task][s[1]][path[1]]
}

/// The meta-MDP episode `path` on `task`, with log-probabilities under `params`.
pub fn episode(policy: &MlpPolicy, params: &ParamVector, task: usize, path: [usize; 2], explore: bool) -> Trajectory {
    let mut t = Trajectory::new(task, explore);
    let s = states(path);
    for step in 0..2 {
        let lp = policy.act(params, &one_hot(s[step]));
        t.push(one_hot(s[step]), path[step], lp[path[step]], REWARDS[task][s[step]][path[step]], step == 1);
    }
    t
}

fn path_log_prob<'t>(policy: &MlpPolicy, p: &[Var<'t>], path: [usize; 2]) -> Var<'t> {
    let tape = p[0].tape();
    let s = states(path);
    let obs = Tensor::matrix(2, 3, [one_hot(s[0]), one_hot(s[1])].concat());
    policy.log_probs(p, tape.constant(obs)).gather_rows(&path).sum()
}

pub struct Setup {
    pub policy: MlpPolicy,
    pub theta: ParamVector,
    pub inner: InnerConfig,
    pub meta: MetaConfig,
}

impl Setup {
    pub fn new(outer: SurrogateKind, credit_mode: CreditMode, lambda: f64) -> Self {
        let policy = MlpPolicy::new(3, 2, vec![]);
        let mut r = rng::seeded(21);
        let zeros = policy.zeros();
        let draws: Vec<f64> = (0..zeros.total_len()).map(|_| 0.5 * r.sample::<f64, _>(StandardNormal)).collect();
        let theta = zeros.unflatten(&draws);
        let inner = InnerConfig { kind: OperatorKind::SgdVpg, alpha: 0.7, steps: 1, ..InnerConfig::default() };
        let meta = MetaConfig {
            lambda_explore: lambda,
            gamma: 1.0,
            credit_mode,
            explore_episodes: 1,
            exploit_episodes: 1,
            outer,
            ent_coeff: 0.0,
            normalize_advantages: false,
            ..MetaConfig::default()
        };
        Setup { policy, theta, inner, meta }
    }

    fn adapted<'t>(&self, p: &[Var<'t>], task: usize, bar: [usize; 2]) -> Vec<Var<'t>> {
        let tape = p[0].tape();
        let tr = episode(&self.policy, &self.theta, task, bar, true);
        let loss = inner_loss(&self.policy, p, &self.theta, &[tr], &self.inner, &self.meta);
        let g = tape.grad_graph(loss, p).expect("finite inner gradient");
        sgd_step_vars(p, &g, self.inner.alpha)
    }

    /// `J(θ) = 1/N Σ_i Σ_τ̄ P_θ(τ̄) Σ_τ P_{U(θ,τ̄)}(τ) R_i(τ)`. With `hold`,
    /// the explore probabilities are taken as constants under those params.
    pub fn objective<'t>(&self, p: &[Var<'t>], hold: Option<&ParamVector>) -> Var<'t> {
        let tape = p[0].tape();
        let mut total = tape.scalar(0.0);
        for task in 0..N_TASKS {
            for bar in PATHS {
                let p_bar = match hold {
                    Some(h) => {
                        let t = episode(&self.policy, h, task, bar, true);
                        tape.scalar(t.log_probs.iter().sum::<f64>().exp())
                    }
                    None => path_log_prob(&self.policy, p, bar).exp(),
                };
                let adapted = self.adapted(p, task, bar);
                for tau in PATHS {
                    let p_tau = path_log_prob(&self.policy, &adapted, tau).exp();
                    total = total + (p_bar * p_tau).scale(path_return(task, tau));
                }
            }
        }
        total.scale(1.0 / N_TASKS as f64)
    }

    /// `∇J` from the tape, with or without the explore distribution held fixed.
    pub fn objective_gradient(&self, hold: bool) -> ParamVector {
        let tape = Tape::new();
        let p = self.theta.to_params(&tape);
        let j = self.objective(&p, hold.then_some(&self.theta));
        self.theta.with_tensors(tape.grad(j, &p).expect("finite objective gradient"))
    }

    fn sample(&self, task: usize, bar: [usize; 2], tau: [usize; 2]) -> (TaskSample, f64) {
        let explore = episode(&self.policy, &self.theta, task, bar, true);
        let p_bar: f64 = explore.log_probs.iter().sum::<f64>().exp();
        let adaptation = adapt(&self.policy, &self.theta, &self.inner, &self.meta, &mut rng::seeded(0), |_, _| {
            Ok(vec![explore.clone()])
        })
        .expect("adaptation on the meta-MDP");
        let exploit = episode(&self.policy, &adaptation.theta_prime, task, tau, false);
        let p_tau: f64 = exploit.log_probs.iter().sum::<f64>().exp();
        (TaskSample { task_id: task, adaptation, exploit: vec![exploit] }, p_bar * p_tau)
    }

    /// Every joint outcome of both tasks with its probability.
    pub fn outcomes(&self) -> Vec<(f64, MetaBatch)> {
        let mut out = Vec::with_capacity(256);
        for combo in 0..256usize {
            let pick = |shift: usize| PATHS[(combo >> shift) & 3];
            let (s0, p0) = self.sample(0, pick(0), pick(2));
            let (s1, p1) = self.sample(1, pick(4), pick(6));
            out.push((p0 * p1, MetaBatch { tasks: vec![s0, s1] }));
        }
        out
    }

    /// Estimator gradient for one sampled meta-batch.
    pub fn estimate(&self, algo: Algo, batch: &MetaBatch) -> ParamVector {
        let prepared = prepare(&self.policy, batch, &self.meta);
        meta_gradient(algo, &self.policy, &self.theta, batch, &prepared, &self.inner, &self.meta)
            .expect("estimator gradient")
            .0
    }

    /// `E[ĝ]` by exhaustive enumeration.
    pub fn expected_estimate(&self, algo: Algo) -> ParamVector {
        let mut total = self.theta.zeros_like();
        let mut mass = 0.0;
        for (p, batch) in self.outcomes() {
            total = total.add(&self.estimate(algo, &batch).scale(p));
            mass += p;
        }
        assert!((mass - 1.0).abs() < 1e-12, "outcome probabilities sum to {mass}");
        total
    }
}

fn max_abs_diff(a: &ParamVector, b: &ParamVector) -> f64 {
    a.flatten().iter().zip(b.flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub const UNBIASED_TOL: f64 = 1e-8;

/// E-MAML estimator against the brute-force gradient of the double integral,
/// for both credit modes and both outer surrogates; MAML term against the
/// held-fixed objective.
pub fn unbiasedness() -> Vec<Check> {
    let mut out = Vec::new();
    for (outer, mode) in [
        (SurrogateKind::Vpg, CreditMode::DiceScalar),
        (SurrogateKind::Vpg, CreditMode::PerTimestep),
        (SurrogateKind::Ppo, CreditMode::DiceScalar),
        (SurrogateKind::Ppo, CreditMode::PerTimestep),
    ] {
        let s = Setup::new(outer, mode, 1.0);
        let truth = s.objective_gradient(false).scale(-1.0);
        let est = s.expected_estimate(Algo::Emaml);
        out.push(Check::at_most(
            &format!("emaml {outer} {} unbiased", mode_name(mode)),
            max_abs_diff(&est, &truth),
            UNBIASED_TOL,
        ));
    }
    let s = Setup::new(SurrogateKind::Vpg, CreditMode::DiceScalar, 1.0);
    let truth = s.objective_gradient(true).scale(-1.0);
    let est = s.expected_estimate(Algo::Maml);
    out.push(Check::at_most("maml term matches held-fixed objective", max_abs_diff(&est, &truth), UNBIASED_TOL));
    // The explore-distribution dependence is large enough for the checks
    // above to tell the two estimators apart.
    let gap = max_abs_diff(&est, &s.objective_gradient(false).scale(-1.0));
    out.push(Check::holds(
        "maml term alone misses the explore-distribution gradient",
        gap > 1e-3,
        &format!("max coordinate gap {gap:.3e}"),
    ));

    // The tape gradient of J itself, against central differences.
    let fd = finite_difference_check(|_, p| s.objective(p, None), &s.theta.tensors(), 1e-5);
    out.push(match fd {
        Ok(err) => Check::at_most("objective gradient vs finite differences", err, 1e-6),
        Err(e) => Check::failed("objective gradient vs finite differences", e.to_string()),
    });
    out
}

fn mode_name(mode: CreditMode) -> &'static str {
    match mode {
        CreditMode::DiceScalar => "dice_scalar",
        CreditMode::PerTimestep => "per_timestep",
    }
}

/// With λ = 0 the E-MAML gradient equals the MAML gradient bit for bit.
pub fn lambda_zero() -> Check {
    let s = Setup::new(SurrogateKind::Ppo, CreditMode::DiceScalar, 0.0);
    let outcomes = s.outcomes();
    let identical = outcomes.iter().step_by(17).all(|(_, b)| {
        let m = s.estimate(Algo::Maml, b).flatten();
        let e = s.estimate(Algo::Emaml, b).flatten();
        m.iter().zip(&e).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    Check::holds("lambda=0 emaml gradient is bit-identical to maml", identical, "")
}

/// Exploration-term gradient for a Bernoulli policy against the score
/// function written out by hand.
pub fn bernoulli_score_function() -> Check {
    let policy = MlpPolicy::new(1, 2, vec![]);
    let logit = 0.37;
    let theta = policy.zeros().with_tensors(vec![Tensor::matrix(1, 2, vec![0.0, 0.0]), Tensor::vector(vec![0.0, logit])]);
    let actions = [1usize, 0, 1, 1, 0];
    let mut tr = Trajectory::new(0, true);
    for &a in &actions {
        tr.push(vec![0.0], a, -0.5, 0.0, false);
    }
    let adaptation = crate::metaalgos::Adaptation {
        batches: vec![vec![tr]],
        outcome: crate::metaalgos::InnerOutcome::Offset(theta.zeros_like()),
        theta_prime: theta.clone(),
    };
    let (c, lambda, n) = (2.5, 0.8, 1);
    let meta = MetaConfig { lambda_explore: lambda, ..MetaConfig::default() };
    let tape = Tape::new();
    let p = theta.to_params(&tape);
    let av = AdaptedVars { theta_prime: p.clone(), sampling: vec![p.clone()] };
    let term = exploration_term(&policy, &av.sampling, &adaptation, c, &meta, n);
    let g = tape.grad(term, &p).expect("finite gradient");
    let pi1 = 1.0 / (1.0 + (-logit).exp());
    let closed: f64 = -lambda * c * actions.iter().map(|&a| a as f64 - pi1).sum::<f64>();
    Check::at_most("bernoulli exploration term vs closed form", (g[1].data()[1] - closed).abs(), 1e-12)
}

/// MAML meta-gradient on a two-parameter bandit against central differences
/// of the composed objective.
pub fn bandit_second_order() -> Check {
    let policy = MlpPolicy::new(1, 2, vec![]);
    let theta = policy.zeros().with_tensors(vec![Tensor::matrix(1, 2, vec![0.0, 0.0]), Tensor::vector(vec![0.2, -0.4])]);
    let inner = InnerConfig { alpha: 0.5, ..InnerConfig::default() };
    let meta = MetaConfig { normalize_advantages: false, ent_coeff: 0.0, outer: SurrogateKind::Vpg, ..MetaConfig::default() };
    let pull = |a: usize, r: f64, params: &ParamVector, explore: bool| {
        let mut t = Trajectory::new(0, explore);
        t.push(vec![0.0], a, policy.act(params, &[0.0])[a], r, true);
        t
    };
    let explore = vec![pull(0, 1.0, &theta, true), pull(1, 0.2, &theta, true), pull(1, 0.4, &theta, true)];
    let adaptation = adapt(&policy, &theta, &inner, &meta, &mut rng::seeded(0), |_, _| Ok(explore.clone())).unwrap();
    let exploit = vec![pull(0, 1.0, &adaptation.theta_prime, false), pull(1, 0.3, &adaptation.theta_prime, false)];
    let batch = MetaBatch { tasks: vec![TaskSample { task_id: 0, adaptation, exploit }] };
    let res = finite_difference_check(
        |_, p| maml_surrogate(&policy, p, &theta, &batch, &inner, &meta).expect("connected operator"),
        &theta.tensors(),
        1e-5,
    );
    match res {
        Ok(err) => Check::at_most("bandit meta-gradient vs finite differences", err, 1e-5),
        Err(e) => Check::failed("bandit meta-gradient vs finite differences", e.to_string()),
    }
}

/// Total variance of the two credit modes over `draws` resampled outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComparison {
    pub dice_scalar: f64,
    pub per_timestep: f64,
    /// Standard error of the paired difference `dice − per_timestep`.
    pub std_error: f64,
}

impl VarianceComparison {
    pub fn z(&self) -> f64 {
        (self.dice_scalar - self.per_timestep) / self.std_error
    }
}

pub fn variance_comparison(draws: usize, seed: u64) -> VarianceComparison {
    let dice = Setup::new(SurrogateKind::Vpg, CreditMode::DiceScalar, 1.0);
    let per = Setup::new(SurrogateKind::Vpg, CreditMode::PerTimestep, 1.0);
    let outcomes = dice.outcomes();
    let table: Vec<(f64, Vec<f64>, Vec<f64>)> = outcomes
        .iter()
        .map(|(p, b)| (*p, dice.estimate(Algo::Emaml, b).flatten(), per.estimate(Algo::Emaml, b).flatten()))
        .collect();
    let mut r = rng::seeded(seed);
    let picks: Vec<usize> = (0..draws)
        .map(|_| {
            let u: f64 = r.random();
            let mut acc = 0.0;
            table.iter().position(|(p, _, _)| {
                acc += p;
                u < acc
            })
            .unwrap_or(table.len() - 1)
        })
        .collect();
    let dim = table[0].1.len();
    let mean_of = |which: usize| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for &k in &picks {
            let g = if which == 0 { &table[k].1 } else { &table[k].2 };
            m.iter_mut().zip(g).for_each(|(a, b)| *a += b / draws as f64);
        }
        m
    };
    let (md, mp) = (mean_of(0), mean_of(1));
    let sq = |g: &[f64], m: &[f64]| g.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let diffs: Vec<(f64, f64)> = picks.iter().map(|&k| (sq(&table[k].1, &md), sq(&table[k].2, &mp))).collect();
    let n = draws as f64;
    let vd = diffs.iter().map(|d| d.0).sum::<f64>() / (n - 1.0);
    let vp = diffs.iter().map(|d| d.1).sum::<f64>() / (n - 1.0);
    let dm = diffs.iter().map(|d| d.0 - d.1).sum::<f64>() / n;
    let dvar = diffs.iter().map(|d| (d.0 - d.1 - dm).powi(2)).sum::<f64>() / (n - 1.0);
    VarianceComparison { dice_scalar: vd, per_timestep: vp, std_error: (dvar / n).sqrt() }
}

pub fn variance_ordering() -> Check {
    let v = variance_comparison(10_000, 5);
    Check::holds(
        "dice_scalar variance ≥ per_timestep variance (3σ margin)",
        v.dice_scalar - v.per_timestep >= -3.0 * v.std_error,
        &format!("dice {:.4} per_timestep {:.4} z {:.1}", v.dice_scalar, v.per_timestep, v.z()),
    )
}

pub fn suite() -> Vec<Check> {
    let mut out = unbiasedness();
    out.push(lambda_zero());
    out.push(bernoulli_score_function());
    out.push(bandit_second_order());
    out.push(variance_ordering());
    out
}
