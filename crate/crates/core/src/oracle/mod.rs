//! Brute-force oracles: finite differences for the tape, exhaustive
//! enumeration for the meta-gradient estimators, and environment checks.

pub mod autodiff;
pub mod envs;
pub mod estimator;

use std::fmt;
use std::str::FromStr;

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn at_most(name: &str, observed: f64, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: observed <= tolerance,
            detail: format!("error {observed:.3e} (tolerance {tolerance:.0e})"),
        }
    }

    pub fn within(name: &str, observed: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: (lo..=hi).contains(&observed),
            detail: format!("observed {observed:.4} (allowed [{lo}, {hi}])"),
        }
    }

    pub fn holds(name: &str, passed: bool, detail: &str) -> Self {
        Check { name: name.to_string(), passed, detail: detail.to_string() }
    }

    pub fn failed(name: &str, detail: String) -> Self {
        Check { name: name.to_string(), passed: false, detail }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        if self.detail.is_empty() {
            write!(f, "{mark} {}", self.name)
        } else {
            write!(f, "{mark} {}: {}", self.name, self.detail)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Autodiff,
    Estimator,
    Envs,
    All,
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "autodiff" => Ok(Suite::Autodiff),
            "estimator" => Ok(Suite::Estimator),
            "envs" => Ok(Suite::Envs),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite `{other}`")),
        }
    }
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Autodiff => autodiff::suite(),
        Suite::Estimator => estimator::suite(),
        Suite::Envs => envs::suite(),
        Suite::All => {
            let mut out = autodiff::suite();
            out.extend(estimator::suite());
            out.extend(envs::suite());
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_all(checks: Vec<Check>) {
        for c in &checks {
            println!("{c}");
        }
        assert!(checks.iter().all(|c| c.passed));
    }

    #[test]
    fn autodiff_suite_passes() {
        assert_all(run_suite(Suite::Autodiff));
    }

    #[test]
    fn estimator_suite_passes() {
        assert_all(run_suite(Suite::Estimator));
    }

    #[test]
    fn envs_suite_passes() {
        assert_all(run_suite(Suite::Envs));
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("all".parse::<Suite>(), Ok(Suite::All));
        assert!("bogus".parse::<Suite>().is_err());
    }
}
