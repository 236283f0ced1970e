use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{sample_task, EnvConfig, Family, TaskSpec};
use crate::metaalgos::{Algo, ConfigError, InnerConfig, MetaConfig};
use crate::policy::PolicyConfig;
use crate::rng::{self, tag};

/// Whether each repeat reuses the configured hyperparameters or draws its
/// own from fixed ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HyperMode {
    #[default]
    Fixed,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub env: Family,
    pub seed: u64,
    /// Training env steps per repeat.
    pub budget: u64,
    pub n_train_tasks: usize,
    pub n_test_tasks: usize,
    /// Evaluate every this many meta-iterations.
    pub eval_every: u64,
    pub repeats: usize,
    pub hyper_mode: HyperMode,
    pub policy: PolicyConfig,
    pub inner: InnerConfig,
    pub meta: MetaConfig,
    pub envs: EnvConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algo: Algo::Maml,
            env: Family::Pointmass,
            seed: 0,
            budget: 200_000,
            n_train_tasks: 32,
            n_test_tasks: 64,
            eval_every: 10,
            repeats: 5,
            hyper_mode: HyperMode::Fixed,
            policy: PolicyConfig::default(),
            inner: InnerConfig::default(),
            meta: MetaConfig::default(),
            envs: EnvConfig::default(),
        }
    }
}

/// Layout seeds of the two pools live in disjoint ranges of this width.
pub const POOL_SPAN: u64 = 1 << 20;

fn bad(key: &str, reason: &str) -> ConfigError {
    ConfigError { key: key.to_string(), reason: reason.to_string() }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.budget == 0 {
            return Err(bad("budget", "must be > 0"));
        }
        if self.n_train_tasks == 0 || self.n_train_tasks as u64 >= POOL_SPAN {
            return Err(bad("n_train_tasks", "must lie in 1..2^20"));
        }
        if self.n_test_tasks == 0 || self.n_test_tasks as u64 >= POOL_SPAN {
            return Err(bad("n_test_tasks", "must lie in 1..2^20"));
        }
        if self.eval_every == 0 {
            return Err(bad("eval_every", "must be ≥ 1"));
        }
        if self.repeats == 0 {
            return Err(bad("repeats", "must be ≥ 1"));
        }
        if self.policy.hidden.contains(&0) || self.policy.gru_hidden == 0 {
            return Err(bad("policy.hidden", "layer widths must be ≥ 1"));
        }
        self.meta.validate(&self.inner)
    }

    fn pool(&self, stream: u64, offset: u64, n: usize) -> Vec<TaskSpec> {
        let base = self.seed.wrapping_mul(2 * POOL_SPAN).wrapping_add(offset);
        (0..n)
            .map(|j| {
                let mut r = rng::stream(&[self.seed, stream, j as u64]);
                TaskSpec { layout_seed: base.wrapping_add(j as u64), ..sample_task(self.env, &self.envs, &mut r) }
            })
            .collect()
    }

    /// Training pool; layout seeds `base .. base + n`.
    pub fn train_tasks(&self) -> Vec<TaskSpec> {
        self.pool(tag::TRAIN_TASKS, 0, self.n_train_tasks)
    }

    /// Test pool; layout seeds `base + 2^20 .. base + 2^20 + n`.
    pub fn test_tasks(&self) -> Vec<TaskSpec> {
        self.pool(tag::TEST_TASKS, POOL_SPAN, self.n_test_tasks)
    }

    /// Run seed of repeat `r`.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        rng::mix(&[self.seed, tag::REPEAT, r as u64])
    }

    /// Inner and meta configs for repeat `r`. In sampled mode the inner step
    /// size, meta step size and exploration weight are drawn log-uniformly.
    pub fn repeat_hypers(&self, r: usize) -> (InnerConfig, MetaConfig) {
        let mut inner = self.inner.clone();
        let mut meta = self.meta.clone();
        if self.hyper_mode == HyperMode::Sampled {
            let mut g = rng::stream(&[self.seed, tag::HYPER, r as u64]);
            let mut log_uniform = |lo: f64, hi: f64| (lo.ln() + g.random::<f64>() * (hi.ln() - lo.ln())).exp();
            inner.alpha = log_uniform(1e-3, 1e-1);
            meta.beta = log_uniform(1e-4, 1e-2);
            if meta.lambda_explore > 0.0 {
                meta.lambda_explore = log_uniform(0.1, 10.0);
            }
        }
        (inner, meta)
    }
}
