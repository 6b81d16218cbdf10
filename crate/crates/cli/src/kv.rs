//! Flat `key = value` config files.
//!
//! Any serde struct with a `Default` can be read and written. Numbers and
//! booleans are written literally, strings bare, and lists comma-separated.
//! Keys missing from a file keep their default; unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("duplicate config key `{0}`")]
    DuplicateKey(String),
    #[error("key `{key}`: cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn object<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value) {
        Ok(Value::Object(m)) => m,
        _ => panic!("config types serialize to JSON objects"),
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Writes every field of `config` as `key = value` lines, in field order.
pub fn serialize<T: Serialize>(config: &T) -> String {
    let mut out = String::new();
    for (key, value) in object(config) {
        let text = match &value {
            Value::Array(items) => items.iter().map(scalar_text).collect::<Vec<_>>().join(","),
            v => scalar_text(v),
        };
        out.push_str(&format!("{key} = {text}\n"));
    }
    out
}

fn parse_scalar(key: &str, text: &str, like: &Value) -> Result<Value, ConfigError> {
    let bad = |expected| ConfigError::BadValue {
        key: key.to_string(),
        value: text.to_string(),
        expected,
    };
    Ok(match like {
        Value::Bool(_) => Value::Bool(text.parse().map_err(|_| bad("a boolean"))?),
        Value::Number(n) if n.is_f64() => {
            let f: f64 = text.parse().map_err(|_| bad("a number"))?;
            serde_json::Number::from_f64(f).map(Value::Number).ok_or_else(|| bad("a finite number"))?
        }
        Value::Number(_) => {
            if let Ok(u) = text.parse::<u64>() {
                Value::from(u)
            } else if let Ok(i) = text.parse::<i64>() {
                Value::from(i)
            } else {
                let f: f64 = text.parse().map_err(|_| bad("a number"))?;
                serde_json::Number::from_f64(f).map(Value::Number).ok_or_else(|| bad("a finite number"))?
            }
        }
        _ => Value::String(text.to_string()),
    })
}

/// Parses `key = value` text over the defaults of `T`.
pub fn parse<T: Serialize + DeserializeOwned + Default>(text: &str) -> Result<T, ConfigError> {
    let defaults = object(&T::default());
    let mut merged = defaults.clone();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let like = defaults
            .get(key)
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey(key.to_string()));
        }
        let parsed = match like {
            Value::Array(items) => {
                let elem = items.first().cloned().unwrap_or(Value::String(String::new()));
                let parts: Vec<Value> = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|p| parse_scalar(key, p.trim(), &elem))
                        .collect::<Result<_, _>>()?
                };
                Value::Array(parts)
            }
            other => parse_scalar(key, value, other)?,
        };
        merged.insert(key.to_string(), parsed);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| ConfigError::Invalid(e.to_string()))
}

/// Reads a config file; `None` yields the defaults.
pub fn load<T: Serialize + DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, ConfigError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            parse(&text)
        }
    }
}

/// Keys a config file sets explicitly; empty when there is no file.
pub fn keys_in(path: Option<&Path>) -> Result<BTreeSet<String>, ConfigError> {
    let Some(p) = path else {
        return Ok(BTreeSet::new());
    };
    let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
        path: p.display().to_string(),
        source: e,
    })?;
    Ok(text
        .lines()
        .filter_map(|l| l.split('#').next()?.split_once('='))
        .map(|(k, _)| k.trim().to_string())
        .collect())
}

/// Sets one key from a command-line override, through the same parser.
pub fn with_override<T: Serialize + DeserializeOwned + Default>(
    config: &T,
    key: &str,
    value: &str,
) -> Result<T, ConfigError> {
    let mut text = serialize(config)
        .lines()
        .filter(|l| l.split('=').next().map(str::trim) != Some(key))
        .collect::<Vec<_>>()
        .join("\n");
    text.push_str(&format!("\n{key} = {value}\n"));
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use udup_core::corpus::{CorpusConfig, FontClass};
    use udup_core::detector::SurrogateConfig;
    use udup_core::udup::{Direction, TrainConfig};

    #[test]
    fn keys_in_lists_set_keys_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.conf");
        std::fs::write(&path, "# lambda = 1\nside = 20\n\nseed=4 # note\n").unwrap();
        let keys = keys_in(Some(&path)).unwrap();
        assert_eq!(keys.into_iter().collect::<Vec<_>>(), ["seed", "side"]);
        assert!(keys_in(None).unwrap().is_empty());
    }

    #[test]
    fn defaults_round_trip() {
        let c = TrainConfig::default();
        assert_eq!(parse::<TrainConfig>(&serialize(&c)).unwrap(), c);
        let s = SurrogateConfig::default();
        assert_eq!(parse::<SurrogateConfig>(&serialize(&s)).unwrap(), s);
        let k = CorpusConfig::default();
        assert_eq!(parse::<CorpusConfig>(&serialize(&k)).unwrap(), k);
    }

    #[test]
    fn partial_file_and_comments() {
        let c: TrainConfig = parse("# run\niterations = 7\n\nalpha = 0.01 # step\ntaps = enc3, dec2\n").unwrap();
        assert_eq!(c.iterations, 7);
        assert_eq!(c.alpha, 0.01);
        assert_eq!(c.taps, vec!["enc3".to_string(), "dec2".to_string()]);
        assert_eq!(c.mu, TrainConfig::default().mu);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(matches!(parse::<TrainConfig>("bogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(
            parse::<TrainConfig>("alpha = 0.1\nalpha = 0.2"),
            Err(ConfigError::DuplicateKey(_))
        ));
        assert!(matches!(parse::<TrainConfig>("alpha"), Err(ConfigError::Syntax { .. })));
        assert!(parse::<TrainConfig>("iterations = many").is_err());
        assert!(parse::<TrainConfig>("direction = sideways").is_err());
    }

    #[test]
    fn override_replaces_key() {
        let c = with_override(&TrainConfig::default(), "seed", "42").unwrap();
        assert_eq!(c.seed, 42);
    }

    fn train_config() -> impl Strategy<Value = TrainConfig> {
        (
            (1usize..500, 1e-4f64..0.5, 0.05f64..0.9, 1usize..300),
            (0.0f64..10.0, 0.0f64..0.99, 1u32..20, 1usize..200),
            (any::<u64>(), any::<bool>(), any::<bool>(), any::<bool>()),
            proptest::collection::vec("[a-z][a-z0-9]{0,5}", 0..4),
        )
            .prop_map(|((it, alpha, eps, side), (lambda, mu, beta, batch), (seed, asc, m, r), taps)| {
                TrainConfig {
                    iterations: it,
                    alpha,
                    epsilon: eps,
                    side,
                    lambda,
                    mu,
                    beta,
                    batch_size: batch,
                    mui_gate: eps / 2.0,
                    seed,
                    direction: if asc { Direction::Ascent } else { Direction::Descent },
                    middle_loss: m,
                    pre_scale: r,
                    taps,
                }
            })
    }

    proptest! {
        #[test]
        fn train_config_round_trip(c in train_config()) {
            prop_assert_eq!(parse::<TrainConfig>(&serialize(&c)).unwrap(), c);
        }

        #[test]
        fn corpus_config_round_trip(
            n_train in 1usize..1000, n_test in 1usize..200, lo in 32usize..300, extra in 0usize..300,
            seed in any::<u64>(), mask in 1u8..8,
        ) {
            let fonts: Vec<FontClass> = [FontClass::Tiny, FontClass::Normal, FontClass::Large]
                .into_iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| f)
                .collect();
            let c = CorpusConfig { n_train, n_test, min_side: lo, max_side: lo + extra, fonts, seed };
            prop_assert_eq!(parse::<CorpusConfig>(&serialize(&c)).unwrap(), c);
        }
    }
}
