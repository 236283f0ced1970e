use rand::Rng;

use super::trajectory::Trajectory;
use crate::envs::{Env, EnvError};
use crate::policy::{sample_from_log_probs, MlpPolicy, ParamVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RolloutError {
    #[error("task {task_id}: {source}")]
    Env {
        task_id: usize,
        #[source]
        source: EnvError,
    },
    /// The policy forward pass produced NaN or infinite log-probabilities.
    #[error("task {task_id}: policy forward produced non-finite log-probabilities")]
    NonFinitePolicy { task_id: usize },
}

/// Rejects log-probabilities that cannot be sampled from.
pub fn check_log_probs(log_probs: &[f64], task_id: usize) -> Result<(), RolloutError> {
    if log_probs.iter().all(|lp| !lp.is_nan() && *lp < f64::INFINITY) && log_probs.iter().any(|lp| lp.is_finite()) {
        Ok(())
    } else {
        Err(RolloutError::NonFinitePolicy { task_id })
    }
}

/// Resets `env` and runs one episode under frozen `params`, stopping at
/// `done` or after `horizon` steps.
pub fn collect_rollout<R: Rng + ?Sized>(
    env: &mut Env,
    policy: &MlpPolicy,
    params: &ParamVector,
    horizon: usize,
    rng: &mut R,
    task_id: usize,
    explore: bool,
) -> Result<Trajectory, RolloutError> {
    let mut traj = Trajectory::new(task_id, explore);
    let mut obs = env.reset(rng).data;
    for _ in 0..horizon {
        let lp = policy.act(params, &obs);
        check_log_probs(&lp, task_id)?;
        let (a, log_prob) = sample_from_log_probs(&lp, rng);
        let step = env.step(a).map_err(|source| RolloutError::Env { task_id, source })?;
        traj.info = step.info;
        traj.push(obs, a, log_prob, step.reward, step.done);
        obs = step.obs.data;
        if step.done {
            break;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{sample_task, EnvConfig, Family};
    use crate::rng;

    #[test]
    fn non_finite_log_probs_are_reported() {
        assert!(check_log_probs(&[-1.0, f64::NEG_INFINITY, -0.5, -2.0], 0).is_ok());
        assert_eq!(check_log_probs(&[f64::NAN, -1.0], 3), Err(RolloutError::NonFinitePolicy { task_id: 3 }));
        assert!(check_log_probs(&[f64::NEG_INFINITY; 4], 0).is_err());
        let pol = MlpPolicy::new(2, 4, vec![4]);
        let params = pol.init(&mut rng::seeded(1)).map(|_| f64::MAX);
        let cfg = EnvConfig::default();
        let task = sample_task(Family::Pointmass, &cfg, &mut rng::seeded(0));
        let mut env = Env::new(&task, &cfg).unwrap();
        let err = collect_rollout(&mut env, &pol, &params, 8, &mut rng::seeded(2), 7, true).unwrap_err();
        assert_eq!(err, RolloutError::NonFinitePolicy { task_id: 7 });
    }

    #[test]
    fn rollouts_are_reproducible_and_bounded() {
        let cfg = EnvConfig::default();
        let task = sample_task(Family::Krazy, &cfg, &mut rng::seeded(0));
        let pol = MlpPolicy::new(cfg.obs_len(Family::Krazy), 4, vec![8]);
        let params = pol.init(&mut rng::seeded(1));
        let run = || {
            let mut env = Env::new(&task, &cfg).unwrap();
            collect_rollout(&mut env, &pol, &params, 64, &mut rng::seeded(2), 0, false).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.len() <= 64 && !a.is_empty());
    }
}
