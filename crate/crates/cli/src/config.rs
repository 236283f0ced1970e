//! Config resolution: built-in defaults, then the config file, then flags.

use std::fs;
use std::path::Path;

use metaexp::envs::Family;
use metaexp::harness::ExperimentConfig;
use metaexp::metaalgos::Algo;

use crate::CliError;

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub algo: Option<Algo>,
    pub env: Option<Family>,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
}

/// Parses a (possibly partial) TOML config. Errors name the offending key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| CliError::Config {
        key: "<file>".into(),
        reason: e.message().to_string(),
    })?;
    serde_path_to_error::deserialize(value).map_err(|e| CliError::Config {
        key: e.path().to_string(),
        reason: e.inner().to_string(),
    })
}

pub fn resolve(config: Option<&Path>, over: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(a) = over.algo {
        cfg.algo = a;
    }
    if let Some(e) = over.env {
        cfg.env = e;
    }
    if let Some(s) = over.seed {
        cfg.seed = s;
    }
    if let Some(b) = over.budget {
        cfg.budget = b;
    }
    cfg.validate().map_err(|e| CliError::Config { key: e.key, reason: e.reason })?;
    Ok(cfg)
}

pub fn to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("experiment config serialises to toml")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_unknown_key_is_named() {
        let err = parse_config("[meta]\nbeta = 0.1\ngama = 0.9\n").unwrap_err();
        match err {
            CliError::Config { key, .. } => assert_eq!(key, "meta.gama"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "seed = 4\nbudget = 100\n[inner]\nalpha = 0.5\n").unwrap();
        let cfg = resolve(Some(&path), &Overrides { seed: Some(9), ..Overrides::default() }).unwrap();
        assert_eq!((cfg.seed, cfg.budget, cfg.inner.alpha), (9, 100, 0.5));
    }

    #[test]
    fn out_of_range_value_names_key() {
        let err = resolve(None, &Overrides { budget: Some(0), ..Overrides::default() }).unwrap_err();
        assert!(matches!(err, CliError::Config { ref key, .. } if key == "budget"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig { seed: 3, ..ExperimentConfig::default() };
        assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg);
    }
}
