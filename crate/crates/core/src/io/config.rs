//! JSON configuration files.
//!
//! Keys mirror [`ExperimentConfig`] in lower_snake_case; missing keys take the
//! default values. Unknown keys are rejected with their path. When
//! `scenario` is given without explicit volatilities, both volatilities take
//! the scenario's value. The seed is taken from the file, else from the
//! `IMPACT_GAME_SEED` environment variable, else the default.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, Scenario};

pub const SEED_ENV: &str = "IMPACT_GAME_SEED";

/// Reads, fills defaults into and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read file: {e}")))?;
    let env_seed = std::env::var(SEED_ENV).ok();
    parse_config_str(&text, env_seed.as_deref())
}

/// [`parse_config`] on a string, with an explicit stand-in for the seed
/// environment variable.
pub fn parse_config_str(text: &str, env_seed: Option<&str>) -> Result<ExperimentConfig> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::config("<root>", format!("malformed JSON: {e}")))?;
    let Value::Object(map) = &value else {
        return Err(Error::config("<root>", "expected a JSON object"));
    };
    let has = |k: &str| map.contains_key(k);
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(&value).map_err(|e| {
        let key = match e.path().to_string() {
            p if p == "." => "<root>".to_string(),
            p => p,
        };
        Error::config(key, e.into_inner().to_string())
    })?;
    if has("scenario") {
        let sigma = config.scenario.sigma();
        if !has("sigma_train") {
            config.sigma_train = sigma;
        }
        if !has("sigma_test") {
            config.sigma_test = sigma;
        }
    }
    if !has("seed") {
        if let Some(raw) = env_seed {
            config.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::config(SEED_ENV, format!("not a u64: {raw:?}")))?;
        }
    }
    config.validate()?;
    Ok(config)
}

/// Pretty JSON with every key written out; parses back to the same config.
pub fn echo_config(config: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

/// Configuration for a named volatility scenario with otherwise default values.
pub fn scenario_config(scenario: Scenario) -> ExperimentConfig {
    ExperimentConfig {
        scenario,
        sigma_train: scenario.sigma(),
        sigma_test: scenario.sigma(),
        ..ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_table_one() {
        assert_eq!(
            parse_config_str("{}", None).unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn zero_runs_rejected() {
        let e = parse_config_str(r#"{"runs": 0}"#, None).unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "runs"));
    }

    #[test]
    fn misspecified_pair() {
        let c = parse_config_str(r#"{"sigma_train": 1e-9, "sigma_test": 1e-2}"#, None).unwrap();
        assert!(c.is_misspecified());
        assert_eq!((c.sigma_train, c.sigma_test), (1e-9, 1e-2));
    }

    #[test]
    fn unknown_key_has_path() {
        let e = parse_config_str(r#"{"ddql": {"batch": 3}}"#, None).unwrap_err();
        match e {
            Error::Config { key, msg } => {
                assert_eq!(key, "ddql.batch");
                assert!(msg.contains("unknown field"), "{msg}");
            }
            other => panic!("{other}"),
        }
        let e = parse_config_str(r#"{"market": {"q0": "x"}}"#, None).unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "market.q0"));
    }

    #[test]
    fn malformed_and_invalid_values() {
        assert!(parse_config_str("{", None).unwrap_err().is_config());
        assert!(parse_config_str("[]", None).unwrap_err().is_config());
        let e = parse_config_str(r#"{"market": {"tau": 0}}"#, None).unwrap_err();
        assert!(e.is_config());
        let e = parse_config_str(r#"{"mode": "parallel"}"#, None).unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "mode"));
    }

    #[test]
    fn scenario_sets_volatilities() {
        let c = parse_config_str(r#"{"scenario": "large"}"#, None).unwrap();
        assert_eq!((c.sigma_train, c.sigma_test), (1e-2, 1e-2));
        let c = parse_config_str(r#"{"scenario": "zero", "sigma_test": 1e-3}"#, None).unwrap();
        assert_eq!((c.sigma_train, c.sigma_test), (1e-9, 1e-3));
        assert_eq!(
            c,
            ExperimentConfig {
                sigma_test: 1e-3,
                ..scenario_config(Scenario::Zero)
            }
        );
    }

    #[test]
    fn seed_sources() {
        assert_eq!(parse_config_str("{}", Some("7")).unwrap().seed, 7);
        assert_eq!(
            parse_config_str(r#"{"seed": 3}"#, Some("7")).unwrap().seed,
            3
        );
        assert!(parse_config_str("{}", Some("abc")).unwrap_err().is_config());
    }

    #[test]
    fn echo_round_trip() {
        let mut c = scenario_config(Scenario::Zero);
        c.runs = 3;
        c.ddql.grid_size = 11;
        c.market.kappa = 0.0015;
        let back = parse_config_str(&echo_config(&c), None).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_file() {
        let e = parse_config(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(e.is_config());
    }
}
