//! Test-time evaluation: pre/post-adaptation returns, the gap between them,
//! the gradient-steps sweep and the Krazy World exploration heuristics.

use rayon::prelude::*;

use super::HarnessError;
use crate::envs::{EnvConfig, Family, TaskSpec};
use crate::metaalgos::{adapt, collect_task_sample, collect_trial, InnerConfig, MetaConfig, MetaError, PolicyKind, Streams};
use crate::policy::{MlpPolicy, ParamVector};
use crate::rlcore::{collect_rollout, Trajectory};
use crate::rng;

/// Krazy World exploration statistics, averaged over tasks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Heuristics {
    /// Distinct tile classes touched over the task's test episodes, out of 8.
    pub tile_fraction: f64,
    /// Episodes ended on a death tile, per task.
    pub death_visits: f64,
    /// Distinct goal cells collected, per episode.
    pub goals_reached: f64,
}

/// `rollouts[i]` are the test episodes of task `i`.
pub fn heuristic_metrics(family: Family, rollouts: &[Vec<&Trajectory>]) -> Result<Heuristics, HarnessError> {
    if family != Family::Krazy {
        return Err(HarnessError::Contract(format!("heuristic metrics need krazy world, got {family}")));
    }
    let n = rollouts.len().max(1) as f64;
    let mut h = Heuristics::default();
    for task in rollouts {
        let touched = task.iter().fold(0u8, |m, t| m | t.info.touched);
        h.tile_fraction += f64::from(touched.count_ones()) / 8.0 / n;
        h.death_visits += task.iter().map(|t| f64::from(t.info.deaths)).sum::<f64>() / n;
        let eps = task.len().max(1) as f64;
        h.goals_reached += task.iter().map(|t| f64::from(t.info.goals_reached)).sum::<f64>() / eps / n;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// `(pre, post)` mean episode return per task.
    pub per_task: Vec<(f64, f64)>,
    pub pre: f64,
    pub post: f64,
    pub gap: f64,
    pub heuristics: Option<Heuristics>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

fn returns(ts: &[&Trajectory]) -> f64 {
    mean(ts.iter().map(|t| t.total_reward()))
}

/// Pre- and post-adaptation return on every test task. MAML-style policies
/// adapt with the configured inner operator; recurrent policies report the
/// explore episodes of a trial as "pre" and the exploit episodes as "post".
#[allow(clippy::too_many_arguments)]
pub fn evaluate_gap(
    policy: &PolicyKind,
    params: &ParamVector,
    family: Family,
    tasks: &[TaskSpec],
    env_cfg: &EnvConfig,
    inner: &InnerConfig,
    meta: &MetaConfig,
    streams: Streams,
) -> Result<GapReport, HarnessError> {
    type Split = (Vec<Trajectory>, Vec<Trajectory>);
    let episodes: Result<Vec<Split>, MetaError> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| match policy {
            PolicyKind::Mlp(p) => {
                let s = collect_task_sample(p, params, task, i, env_cfg, inner, meta, streams)?;
                Ok((s.adaptation.batches.into_iter().flatten().collect(), s.exploit))
            }
            PolicyKind::Gru(p) => {
                let trial = collect_trial(p, params, task, i, env_cfg, meta, streams)?;
                Ok(trial.episodes.into_iter().partition(|e| e.explore))
            }
        })
        .collect();
    let episodes = episodes?;
    let per_task: Vec<(f64, f64)> = episodes
        .iter()
        .map(|(pre, post)| (returns(&pre.iter().collect::<Vec<_>>()), returns(&post.iter().collect::<Vec<_>>())))
        .collect();
    let pre = mean(per_task.iter().map(|p| p.0));
    let post = mean(per_task.iter().map(|p| p.1));
    let heuristics = (family == Family::Krazy)
        .then(|| {
            let all: Vec<Vec<&Trajectory>> = episodes.iter().map(|(a, b)| a.iter().chain(b).collect()).collect();
            heuristic_metrics(family, &all)
        })
        .transpose()?;
    Ok(GapReport { per_task, pre, post, gap: post - pre, heuristics })
}

/// Mean test return after `0..=max_steps` inner steps. Row 0 is the return of
/// the explore episodes under θ; row `n` rolls out the parameters reached
/// after `n` inner steps on the same explore data.
#[allow(clippy::too_many_arguments)]
pub fn grad_steps_sweep(
    policy: &PolicyKind,
    params: &ParamVector,
    tasks: &[TaskSpec],
    env_cfg: &EnvConfig,
    inner: &InnerConfig,
    meta: &MetaConfig,
    max_steps: usize,
    streams: Streams,
) -> Result<Vec<(usize, f64)>, HarnessError> {
    let PolicyKind::Mlp(policy) = policy else {
        return Err(HarnessError::Contract("grad_steps_sweep applies to maml and emaml only".into()));
    };
    let per_task: Result<Vec<Vec<f64>>, MetaError> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| sweep_task(policy, params, task, i, env_cfg, inner, meta, max_steps, streams))
        .collect();
    let per_task = per_task?;
    Ok((0..=max_steps).map(|n| (n, mean(per_task.iter().map(|r| r[n])))).collect())
}

#[allow(clippy::too_many_arguments)]
fn sweep_task(
    policy: &MlpPolicy,
    params: &ParamVector,
    task: &TaskSpec,
    task_id: usize,
    env_cfg: &EnvConfig,
    inner: &InnerConfig,
    meta: &MetaConfig,
    max_steps: usize,
    s: Streams,
) -> Result<Vec<f64>, MetaError> {
    let t = task_id as u64;
    let mut env = crate::envs::Env::new(task, env_cfg)?;
    let mut sample = |k: usize, theta: &ParamVector, tag: u64, explore: bool| -> Result<Vec<Trajectory>, MetaError> {
        let count = if explore { meta.explore_episodes } else { meta.exploit_episodes };
        (0..count)
            .map(|j| {
                let mut r = rng::stream(&[s.seed, tag, s.iter, t, k as u64, j as u64]);
                Ok(collect_rollout(&mut env, policy, theta, task.horizon, &mut r, task_id, explore)?)
            })
            .collect()
    };
    let explore = sample(0, params, s.explore, true)?;
    let mut rows = vec![mean(explore.iter().map(Trajectory::total_reward))];
    for n in 1..=max_steps {
        let cfg = InnerConfig { steps: n, ..inner.clone() };
        let mut op_rng = rng::stream(&[s.seed, s.inner, s.iter, t]);
        let adaptation = adapt(policy, params, &cfg, meta, &mut op_rng, |k, theta| {
            if k == 0 { Ok(explore.clone()) } else { sample(k, theta, s.explore, true) }
        })?;
        let exploit = sample(n, &adaptation.theta_prime, s.exploit, false)?;
        rows.push(mean(exploit.iter().map(Trajectory::total_reward)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::StepInfo;
    use crate::harness::ExperimentConfig;
    use crate::metaalgos::Algo;

    fn ep(touched: u8, deaths: u32, goals: u32) -> Trajectory {
        Trajectory { info: StepInfo { goals_reached: goals, deaths, touched }, ..Trajectory::default() }
    }

    #[test]
    fn tile_fraction_counts_classes() {
        let a = ep(0b0000_0111, 0, 1);
        let b = ep(0b0011_0001, 1, 2);
        let h = heuristic_metrics(Family::Krazy, &[vec![&a, &b]]).unwrap();
        assert_eq!(h.tile_fraction, 0.625);
        assert_eq!(h.death_visits, 1.0);
        assert_eq!(h.goals_reached, 1.5);
        let c = ep(0b1111_1100, 0, 0);
        assert_eq!(heuristic_metrics(Family::Krazy, &[vec![&a, &c]]).unwrap().tile_fraction, 1.0);
        assert_eq!(heuristic_metrics(Family::Krazy, &[vec![&ep(1, 0, 0)]]).unwrap().tile_fraction, 0.125);
    }

    #[test]
    fn heuristics_reject_other_families() {
        assert!(heuristic_metrics(Family::Maze, &[]).is_err());
    }

    fn small(algo: Algo) -> (ExperimentConfig, PolicyKind, ParamVector) {
        let mut cfg = ExperimentConfig { algo, n_test_tasks: 6, ..ExperimentConfig::default() };
        cfg.policy.hidden = vec![8];
        cfg.policy.gru_hidden = 8;
        let pk = PolicyKind::for_algo(algo, &cfg.policy, cfg.envs.obs_len(cfg.env));
        let params = pk.init(1);
        (cfg, pk, params)
    }

    #[test]
    fn sweep_has_one_row_per_step_count_and_row_zero_is_pre() {
        let (cfg, pk, params) = small(Algo::Maml);
        let tasks = cfg.test_tasks();
        let s = Streams::eval(0, 0);
        let rows = grad_steps_sweep(&pk, &params, &tasks, &cfg.envs, &cfg.inner, &cfg.meta, 5, s).unwrap();
        assert_eq!(rows.len(), 6);
        let gap = evaluate_gap(&pk, &params, cfg.env, &tasks, &cfg.envs, &cfg.inner, &cfg.meta, s).unwrap();
        assert_eq!(rows[0].1, gap.pre);
    }

    #[test]
    fn sweep_rejects_recurrent_policies() {
        let (cfg, pk, params) = small(Algo::Rl2);
        let r = grad_steps_sweep(&pk, &params, &cfg.test_tasks(), &cfg.envs, &cfg.inner, &cfg.meta, 2, Streams::eval(0, 0));
        assert!(matches!(r, Err(HarnessError::Contract(_))));
    }

    #[test]
    fn evaluation_leaves_parameters_untouched() {
        for algo in [Algo::Emaml, Algo::Erl2] {
            let (cfg, pk, params) = small(algo);
            let before = params.digest();
            let g = evaluate_gap(&pk, &params, cfg.env, &cfg.test_tasks(), &cfg.envs, &cfg.inner, &cfg.meta, Streams::eval(0, 0))
                .unwrap();
            assert_eq!(params.digest(), before);
            assert_eq!(g.gap, g.post - g.pre);
            assert_eq!(g.per_task.len(), 6);
        }
    }
}
