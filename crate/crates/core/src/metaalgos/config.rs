use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rlcore::{SurrogateKind, SurrogateSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Maml,
    Emaml,
    Rl2,
    Erl2,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Maml => "maml",
            Algo::Emaml => "emaml",
            Algo::Rl2 => "rl2",
            Algo::Erl2 => "erl2",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Algo::Rl2 | Algo::Erl2)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "maml" => Ok(Algo::Maml),
            "emaml" => Ok(Algo::Emaml),
            "rl2" => Ok(Algo::Rl2),
            "erl2" => Ok(Algo::Erl2),
            other => Err(format!("unknown algo `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    SgdVpg,
    SgdPpo,
    RandomPerturb,
    EpsGreedy,
    SignFlip,
    Perpendicular,
}

impl OperatorKind {
    /// Only plain SGD steps keep θ′ connected to θ on the tape.
    pub fn is_differentiable(self) -> bool {
        matches!(self, OperatorKind::SgdVpg | OperatorKind::SgdPpo)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::SgdVpg => "sgd_vpg",
            OperatorKind::SgdPpo => "sgd_ppo",
            OperatorKind::RandomPerturb => "random_perturb",
            OperatorKind::EpsGreedy => "eps_greedy",
            OperatorKind::SignFlip => "sign_flip",
            OperatorKind::Perpendicular => "perpendicular",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerConfig {
    pub kind: OperatorKind,
    /// Inner step size α.
    pub alpha: f64,
    pub steps: usize,
    /// Reuse the first explore batch for every inner step.
    pub simple_sampling: bool,
    /// Perturbation scale for `random_perturb` and `eps_greedy`.
    pub sigma: f64,
    /// Probability of perturbing instead of stepping for `eps_greedy`.
    pub eps: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            kind: OperatorKind::SgdVpg,
            alpha: 0.01,
            steps: 1,
            simple_sampling: true,
            sigma: 0.01,
            eps: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditMode {
    /// Summed exploit return times summed explore log-likelihood.
    DiceScalar,
    /// One product per explore timestep, with the coefficient centred on the
    /// other tasks of the batch.
    PerTimestep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub lambda_explore: f64,
    /// Adam meta step size.
    pub beta: f64,
    pub gamma: f64,
    pub credit_mode: CreditMode,
    /// Explore and exploit episodes per task for MAML and E-MAML.
    pub explore_episodes: usize,
    pub exploit_episodes: usize,
    /// Episodes per RL² trial (k) and how many of them explore (p).
    pub trial_episodes: usize,
    pub trial_explore: usize,
    pub outer: SurrogateKind,
    pub clip: f64,
    pub ent_coeff: f64,
    pub vf_coeff: f64,
    pub max_grad_norm: f64,
    pub meta_grad_steps: usize,
    pub normalize_advantages: bool,
    pub use_gae: bool,
    pub gae_lambda: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            lambda_explore: 1.0,
            beta: 1e-3,
            gamma: 0.99,
            credit_mode: CreditMode::DiceScalar,
            explore_episodes: 2,
            exploit_episodes: 2,
            trial_episodes: 5,
            trial_explore: 3,
            outer: SurrogateKind::Ppo,
            clip: 0.2,
            ent_coeff: 1e-3,
            vf_coeff: 0.0,
            max_grad_norm: 1.0,
            meta_grad_steps: 1,
            normalize_advantages: true,
            use_gae: false,
            gae_lambda: 0.997,
        }
    }
}

/// A config value outside its allowed range, with its key path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid config `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError { key: key.to_string(), reason: reason.into() }
}

impl MetaConfig {
    pub fn outer_spec(&self) -> SurrogateSpec {
        SurrogateSpec { kind: self.outer, clip: self.clip, ent_coeff: self.ent_coeff }
    }

    pub fn validate(&self, inner: &InnerConfig) -> Result<(), ConfigError> {
        if self.lambda_explore < 0.0 {
            return Err(bad("meta.lambda_explore", "must be ≥ 0"));
        }
        if self.beta <= 0.0 {
            return Err(bad("meta.beta", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(bad("meta.gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(bad("meta.gae_lambda", "must lie in [0, 1]"));
        }
        if self.explore_episodes == 0 {
            return Err(bad("meta.explore_episodes", "must be ≥ 1"));
        }
        if self.exploit_episodes == 0 {
            return Err(bad("meta.exploit_episodes", "must be ≥ 1"));
        }
        if self.trial_explore >= self.trial_episodes {
            return Err(bad("meta.trial_explore", "must leave at least one exploit episode"));
        }
        if self.meta_grad_steps == 0 {
            return Err(bad("meta.meta_grad_steps", "must be ≥ 1"));
        }
        if self.meta_grad_steps > 1 && self.outer != SurrogateKind::Ppo {
            return Err(bad("meta.meta_grad_steps", "values above 1 require the ppo outer surrogate"));
        }
        if self.max_grad_norm <= 0.0 {
            return Err(bad("meta.max_grad_norm", "must be > 0"));
        }
        if inner.alpha <= 0.0 {
            return Err(bad("inner.alpha", "must be > 0"));
        }
        if inner.steps == 0 || inner.steps > 20 {
            return Err(bad("inner.steps", "must lie in 1..=20"));
        }
        if !(0.0..=1.0).contains(&inner.eps) {
            return Err(bad("inner.eps", "must lie in [0, 1]"));
        }
        if inner.sigma < 0.0 {
            return Err(bad("inner.sigma", "must be ≥ 0"));
        }
        Ok(())
    }
}
