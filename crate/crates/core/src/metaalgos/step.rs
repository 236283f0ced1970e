//! The outer meta step: collect per task in parallel, build the surrogate,
//! clip and apply Adam.

use rayon::prelude::*;

use super::batch::mean;
use super::config::{Algo, InnerConfig, MetaConfig};
use super::inner::adapt;
use super::rl2::{rl2_gradient, rl2_trial, trial_advantages, Trial};
use super::surrogate::{meta_gradient, prepare, MetaBatch, TaskSample};
use super::MetaError;
use crate::envs::{Env, EnvConfig, Family, TaskSpec, N_ACTIONS};
use crate::policy::{GruPolicy, MlpPolicy, ParamVector, PolicyConfig};
use crate::rlcore::{clip_grad_norm, collect_rollout, Adam, Trajectory};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Mlp(MlpPolicy),
    Gru(GruPolicy),
}

impl PolicyKind {
    pub fn for_algo(algo: Algo, cfg: &PolicyConfig, obs_len: usize) -> Self {
        if algo.is_recurrent() {
            PolicyKind::Gru(cfg.gru(obs_len, N_ACTIONS))
        } else {
            PolicyKind::Mlp(cfg.mlp(obs_len, N_ACTIONS))
        }
    }

    pub fn init(&self, seed: u64) -> ParamVector {
        let mut r = rng::stream(&[seed, tag::INIT]);
        match self {
            PolicyKind::Mlp(p) => p.init(&mut r),
            PolicyKind::Gru(p) => p.init(&mut r),
        }
    }
}

/// Stream tags for one collection pass (training or evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    pub seed: u64,
    pub iter: u64,
    pub explore: u64,
    pub exploit: u64,
    pub inner: u64,
    pub trial: u64,
}

impl Streams {
    pub fn train(seed: u64, iter: u64) -> Self {
        Streams { seed, iter, explore: tag::EXPLORE, exploit: tag::EXPLOIT, inner: tag::INNER, trial: tag::TRIAL }
    }

    pub fn eval(seed: u64, iter: u64) -> Self {
        Streams {
            seed,
            iter,
            explore: tag::EVAL_EXPLORE,
            exploit: tag::EVAL_EXPLOIT,
            inner: tag::EVAL_INNER,
            trial: tag::EVAL_TRIAL,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn episodes(
    policy: &MlpPolicy,
    params: &ParamVector,
    task: &TaskSpec,
    env_cfg: &EnvConfig,
    count: usize,
    keys: [u64; 5],
    task_id: usize,
    explore: bool,
) -> Result<Vec<Trajectory>, MetaError> {
    let mut env = Env::new(task, env_cfg)?;
    (0..count)
        .map(|j| {
            let mut r = rng::stream(&[keys[0], keys[1], keys[2], keys[3], keys[4], j as u64]);
            Ok(collect_rollout(&mut env, policy, params, task.horizon, &mut r, task_id, explore)?)
        })
        .collect()
}

/// Explore under θ, adapt, then exploit under θ′ for one task.
#[allow(clippy::too_many_arguments)]
pub fn collect_task_sample(
    policy: &MlpPolicy,
    theta: &ParamVector,
    task: &TaskSpec,
    task_id: usize,
    env_cfg: &EnvConfig,
    inner: &InnerConfig,
    meta: &MetaConfig,
    streams: Streams,
) -> Result<TaskSample, MetaError> {
    let s = streams;
    let t = task_id as u64;
    let mut op_rng = rng::stream(&[s.seed, s.inner, s.iter, t]);
    let adaptation = adapt(policy, theta, inner, meta, &mut op_rng, |k, theta_k| {
        let keys = [s.seed, s.explore, s.iter, t, k as u64];
        episodes(policy, theta_k, task, env_cfg, meta.explore_episodes, keys, task_id, true)
    })?;
    let keys = [s.seed, s.exploit, s.iter, t, 0];
    let exploit = episodes(policy, &adaptation.theta_prime, task, env_cfg, meta.exploit_episodes, keys, task_id, false)?;
    Ok(TaskSample { task_id, adaptation, exploit })
}

/// One RL² trial on `task` under frozen `params`.
pub fn collect_trial(
    policy: &GruPolicy,
    params: &ParamVector,
    task: &TaskSpec,
    task_id: usize,
    env_cfg: &EnvConfig,
    meta: &MetaConfig,
    streams: Streams,
) -> Result<Trial, MetaError> {
    let mut env = Env::new(task, env_cfg)?;
    let mut r = rng::stream(&[streams.seed, streams.trial, streams.iter, task_id as u64]);
    Ok(rl2_trial(
        policy,
        params,
        &mut env,
        meta.trial_episodes,
        meta.trial_explore,
        task.horizon,
        &mut r,
        task_id,
    )?)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterStats {
    /// Mean undiscounted return of explore episodes (pre-update).
    pub explore_return: f64,
    /// Mean undiscounted return of exploit episodes (post-update).
    pub exploit_return: f64,
    pub task_explore: Vec<f64>,
    pub task_exploit: Vec<f64>,
    pub pre_clip_norm: f64,
    pub post_clip_norm: f64,
    pub loss: f64,
    pub env_steps: u64,
}

/// Meta-learner state: parameters, Adam moments and the iteration counter.
#[derive(Debug, Clone)]
pub struct MetaLearner {
    pub algo: Algo,
    pub family: Family,
    pub policy: PolicyKind,
    pub params: ParamVector,
    pub inner: InnerConfig,
    pub meta: MetaConfig,
    pub env: EnvConfig,
    pub seed: u64,
    adam: Adam,
    iter: u64,
}

impl MetaLearner {
    pub fn new(
        algo: Algo,
        family: Family,
        policy_cfg: &PolicyConfig,
        env: EnvConfig,
        inner: InnerConfig,
        meta: MetaConfig,
        seed: u64,
    ) -> Self {
        let policy = PolicyKind::for_algo(algo, policy_cfg, env.obs_len(family));
        let params = policy.init(seed);
        let adam = Adam::new(meta.beta);
        MetaLearner { algo, family, policy, params, inner, meta, env, seed, adam, iter: 0 }
    }

    pub fn iteration(&self) -> u64 {
        self.iter
    }

    fn apply(&mut self, grad: &ParamVector, stats: &mut IterStats) -> Result<(), MetaError> {
        let (clipped, pre) = clip_grad_norm(grad, self.meta.max_grad_norm)?;
        stats.pre_clip_norm = pre;
        stats.post_clip_norm = clipped.norm();
        self.params = self.adam.step(&self.params, &clipped);
        if let Some(segment) = self.params.non_finite_segment() {
            return Err(MetaError::Gradient(crate::rlcore::NonFiniteGradient { segment: segment.to_string() }));
        }
        Ok(())
    }

    /// One meta-iteration on `tasks`.
    pub fn meta_step(&mut self, tasks: &[TaskSpec]) -> Result<IterStats, MetaError> {
        assert!(!tasks.is_empty(), "meta_step needs at least one task");
        let streams = Streams::train(self.seed, self.iter);
        let stats = match self.policy.clone() {
            PolicyKind::Mlp(policy) => self.step_mlp(&policy, tasks, streams)?,
            PolicyKind::Gru(policy) => self.step_gru(&policy, tasks, streams)?,
        };
        self.iter += 1;
        Ok(stats)
    }

    fn step_mlp(&mut self, policy: &MlpPolicy, tasks: &[TaskSpec], streams: Streams) -> Result<IterStats, MetaError> {
        let theta = self.params.clone();
        let samples: Result<Vec<TaskSample>, MetaError> = tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| collect_task_sample(policy, &theta, task, i, &self.env, &self.inner, &self.meta, streams))
            .collect();
        let batch = MetaBatch { tasks: samples? };
        let prepared = prepare(policy, &batch, &self.meta);

        let mut stats = IterStats::default();
        for s in &batch.tasks {
            let explore: Vec<&Trajectory> = s.adaptation.batches.iter().flatten().collect();
            stats.env_steps += explore.iter().map(|t| t.len() as u64).sum::<u64>();
            stats.env_steps += s.exploit.iter().map(|t| t.len() as u64).sum::<u64>();
            stats.task_explore.push(mean(explore.iter().map(|t| t.total_reward())));
            stats.task_exploit.push(mean(s.exploit.iter().map(Trajectory::total_reward)));
        }
        stats.explore_return = mean(stats.task_explore.iter().copied());
        stats.exploit_return = mean(stats.task_exploit.iter().copied());

        for k in 0..self.meta.meta_grad_steps {
            let (grad, loss) = meta_gradient(self.algo, policy, &self.params, &batch, &prepared, &self.inner, &self.meta)?;
            if k == 0 {
                stats.loss = loss;
            }
            self.apply(&grad, &mut stats)?;
        }
        Ok(stats)
    }

    fn step_gru(&mut self, policy: &GruPolicy, tasks: &[TaskSpec], streams: Streams) -> Result<IterStats, MetaError> {
        let theta = self.params.clone();
        let trials: Result<Vec<Trial>, MetaError> = tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| collect_trial(policy, &theta, task, i, &self.env, &self.meta, streams))
            .collect();
        let trials = trials?;
        let advantages = trial_advantages(&trials, self.algo, &self.meta);

        let mut stats = IterStats::default();
        for t in &trials {
            stats.env_steps += t.steps() as u64;
            let (ex, ep): (Vec<&Trajectory>, Vec<&Trajectory>) = t.episodes.iter().partition(|e| e.explore);
            stats.task_explore.push(mean(ex.iter().map(|e| e.total_reward())));
            stats.task_exploit.push(mean(ep.iter().map(|e| e.total_reward())));
        }
        stats.explore_return = mean(stats.task_explore.iter().copied());
        stats.exploit_return = mean(stats.task_exploit.iter().copied());

        for k in 0..self.meta.meta_grad_steps {
            let (grad, loss) = rl2_gradient(policy, &self.params, &trials, &advantages, &self.meta)?;
            if k == 0 {
                stats.loss = loss;
            }
            self.apply(&grad, &mut stats)?;
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::sample_task;

    fn learner(algo: Algo) -> (MetaLearner, Vec<TaskSpec>) {
        let env = EnvConfig::default();
        let pc = PolicyConfig { hidden: vec![8], gru_hidden: 8, ..PolicyConfig::default() };
        let l = MetaLearner::new(algo, Family::Pointmass, &pc, env.clone(), InnerConfig::default(), MetaConfig::default(), 4);
        let mut r = rng::seeded(0);
        let tasks = (0..4).map(|_| sample_task(Family::Pointmass, &env, &mut r)).collect();
        (l, tasks)
    }

    #[test]
    fn meta_step_moves_parameters_and_clips() {
        for algo in [Algo::Maml, Algo::Emaml, Algo::Rl2, Algo::Erl2] {
            let (mut l, tasks) = learner(algo);
            let before = l.params.clone();
            let stats = l.meta_step(&tasks).unwrap();
            assert!(l.params.sub(&before).norm() > 0.0, "{algo}");
            assert!(stats.post_clip_norm <= l.meta.max_grad_norm + 1e-12);
            assert_eq!(stats.task_explore.len(), 4);
            assert!(stats.env_steps > 0);
            assert_eq!(l.iteration(), 1);
        }
    }

    #[test]
    fn step_accounting_matches_trajectory_lengths() {
        let (l, tasks) = learner(Algo::Maml);
        let PolicyKind::Mlp(p) = &l.policy else { unreachable!() };
        let mut total = 0;
        for (i, t) in tasks.iter().enumerate() {
            let s = collect_task_sample(p, &l.params, t, i, &l.env, &l.inner, &l.meta, Streams::train(4, 0)).unwrap();
            total += s.adaptation.batches.iter().flatten().chain(&s.exploit).map(|t| t.len() as u64).sum::<u64>();
        }
        let (mut l, _) = learner(Algo::Maml);
        assert_eq!(l.meta_step(&tasks).unwrap().env_steps, total);
    }

    #[test]
    fn meta_step_is_deterministic_across_pool_sizes() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let (mut l, tasks) = learner(Algo::Emaml);
                l.meta_step(&tasks).unwrap();
                l.meta_step(&tasks).unwrap();
                l.params.flatten()
            })
        };
        assert_eq!(run(1), run(4));
    }
}
