//! Run configuration: defaults, validation and the flat `key = value` file format.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// DCT window length in frames (even, ≥ 4).
    pub window: usize,
    pub epsilon: f64,
    /// Spectral similarity scale.
    pub tau: f64,
    /// Fusion weight at the first attention layer.
    pub alpha0: f64,
    /// Fraction of the mask budget given to semantic salience.
    pub lambda_sem: f64,
    /// Temporal expansion radius around selected frames.
    pub r_exp: usize,
    /// Complexity vs. uncertainty blend of the exploration score.
    pub lambda_d: f64,
    /// Temperature adaptation strength.
    pub beta: f64,
    pub sigma_max: f64,
    /// Decoding steps.
    pub steps: usize,
    /// (mask, random, keep) probabilities for corrupting selected positions.
    pub bert_ratios: [f64; 3],
    pub t_global: f64,
    pub seed: u64,
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Codebook size when one has to be fitted.
    pub vocab: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            window: 8,
            epsilon: 1e-8,
            tau: 1.0,
            alpha0: 0.2,
            lambda_sem: 0.3,
            r_exp: 1,
            lambda_d: 0.5,
            beta: 0.5,
            sigma_max: 0.1,
            steps: 10,
            bert_ratios: [0.8, 0.1, 0.1],
            t_global: 1.0,
            seed: 0,
            layers: 2,
            heads: 2,
            dim: 16,
            epochs: 30,
            lr: 0.05,
            vocab: 16,
        }
    }
}

const KEYS: &[&str] = &[
    "window",
    "epsilon",
    "tau",
    "alpha0",
    "lambda_sem",
    "r_exp",
    "lambda_d",
    "beta",
    "sigma_max",
    "steps",
    "bert_ratios",
    "t_global",
    "seed",
    "layers",
    "heads",
    "dim",
    "epochs",
    "lr",
    "vocab",
];

/// Field name for a config key, resolving aliases; `None` for unknown keys.
pub fn canonical_key(key: &str) -> Option<&'static str> {
    let k = key.trim();
    let k = match k {
        "W" | "w" => "window",
        "lambda" => "lambda_sem",
        other => other,
    };
    let k = k.replace('-', "_");
    KEYS.iter().copied().find(|c| *c == k)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Parse {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn unit(key: &str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(ConfigError::Range(key.to_string()))
    }
}

fn check(key: &str, ok: bool) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range(key.to_string()))
    }
}

/// Builds a fully defaulted [`Config`] from any subset of keys.
///
/// Values are given as text; `bert_ratios` is a comma-separated triple. `W` is
/// accepted as an alias for `window`, and `-` for `_` in key names.
pub fn validate_config(raw: &BTreeMap<String, String>) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    for (key, value) in raw {
        let canon = canonical_key(key).ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
        let k = key.as_str();
        match canon {
            "window" => {
                let w: usize = parse(k, value)?;
                check(k, w >= 4 && w.is_multiple_of(2))?;
                cfg.window = w;
            }
            "epsilon" => {
                let e: f64 = parse(k, value)?;
                check(k, e.is_finite() && e > 0.0)?;
                cfg.epsilon = e;
            }
            "tau" => {
                let t: f64 = parse(k, value)?;
                check(k, t.is_finite() && t > 0.0)?;
                cfg.tau = t;
            }
            "alpha0" => cfg.alpha0 = unit(k, parse(k, value)?)?,
            "lambda_sem" => cfg.lambda_sem = unit(k, parse(k, value)?)?,
            "r_exp" => cfg.r_exp = parse(k, value)?,
            "lambda_d" => cfg.lambda_d = unit(k, parse(k, value)?)?,
            "beta" => {
                let b: f64 = parse(k, value)?;
                check(k, b.is_finite() && b >= 0.0)?;
                cfg.beta = b;
            }
            "sigma_max" => {
                let s: f64 = parse(k, value)?;
                check(k, s.is_finite() && s >= 0.0)?;
                cfg.sigma_max = s;
            }
            "steps" => {
                let s: usize = parse(k, value)?;
                check(k, s >= 1)?;
                cfg.steps = s;
            }
            "bert_ratios" => {
                let parts: Vec<f64> = value
                    .trim()
                    .trim_matches(|c| c == '(' || c == ')')
                    .split(',')
                    .map(|p| parse(k, p))
                    .collect::<Result<_, _>>()?;
                check(k, parts.len() == 3)?;
                check(k, parts.iter().all(|p| p.is_finite() && *p >= 0.0))?;
                check(k, (parts.iter().sum::<f64>() - 1.0).abs() <= 1e-9)?;
                cfg.bert_ratios = [parts[0], parts[1], parts[2]];
            }
            "t_global" => {
                let t: f64 = parse(k, value)?;
                check(k, t.is_finite() && t > 0.0)?;
                cfg.t_global = t;
            }
            "seed" => cfg.seed = parse(k, value)?,
            "layers" => {
                let l: usize = parse(k, value)?;
                check(k, l >= 1)?;
                cfg.layers = l;
            }
            "heads" => {
                let h: usize = parse(k, value)?;
                check(k, h >= 1)?;
                cfg.heads = h;
            }
            "dim" => {
                let d: usize = parse(k, value)?;
                check(k, d >= 1)?;
                cfg.dim = d;
            }
            "epochs" => cfg.epochs = parse(k, value)?,
            "lr" => {
                let lr: f64 = parse(k, value)?;
                check(k, lr.is_finite() && lr >= 0.0)?;
                cfg.lr = lr;
            }
            "vocab" => {
                let v: usize = parse(k, value)?;
                check(k, v >= 2)?;
                cfg.vocab = v;
            }
            _ => unreachable!("canonical key list and match arms diverged"),
        }
    }
    if cfg.dim % cfg.heads != 0 {
        return Err(ConfigError::Range("heads".into()));
    }
    Ok(cfg)
}

impl Config {
    /// Renders every field back into the textual form accepted by [`validate_config`].
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let [m, r, k] = self.bert_ratios;
        [
            ("window", self.window.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("tau", self.tau.to_string()),
            ("alpha0", self.alpha0.to_string()),
            ("lambda_sem", self.lambda_sem.to_string()),
            ("r_exp", self.r_exp.to_string()),
            ("lambda_d", self.lambda_d.to_string()),
            ("beta", self.beta.to_string()),
            ("sigma_max", self.sigma_max.to_string()),
            ("steps", self.steps.to_string()),
            ("bert_ratios", format!("{m},{r},{k}")),
            ("t_global", self.t_global.to_string()),
            ("seed", self.seed.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("dim", self.dim.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("vocab", self.vocab.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Parses the flat config file format: one `key = value` (or `key=value`) per
/// line, `#` starts a comment, blank lines are ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn empty_map_gives_defaults() {
        assert_eq!(validate_config(&BTreeMap::new()).unwrap(), Config::default());
    }

    #[test]
    fn odd_window_rejected() {
        assert_eq!(
            validate_config(&map(&[("W", "3")])),
            Err(ConfigError::Range("W".into()))
        );
        assert!(validate_config(&map(&[("window", "2")])).is_err());
    }

    #[test]
    fn ratios_must_sum_to_one() {
        assert_eq!(
            validate_config(&map(&[("bert_ratios", "0.5,0.5,0.5")])),
            Err(ConfigError::Range("bert_ratios".into()))
        );
        let cfg = validate_config(&map(&[("bert_ratios", "(1,0,0)")])).unwrap();
        assert_eq!(cfg.bert_ratios, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn unknown_key_and_parse_errors() {
        assert_eq!(
            validate_config(&map(&[("gamma", "1")])),
            Err(ConfigError::UnknownKey("gamma".into()))
        );
        assert!(matches!(
            validate_config(&map(&[("tau", "abc")])),
            Err(ConfigError::Parse { .. })
        ));
        assert!(validate_config(&map(&[("tau", "0")])).is_err());
        assert!(validate_config(&map(&[("heads", "3")])).is_err());
    }

    #[test]
    fn idempotent_roundtrip() {
        let cfg = validate_config(&map(&[("tau", "0.3"), ("seed", "9"), ("sigma-max", "0.25")]))
            .unwrap();
        let again = validate_config(&cfg.to_map()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_map(), cfg.to_map());
    }

    #[test]
    fn file_format() {
        let text = "# comment\nwindow = 16\n\n tau=0.5 # trailing\n";
        let m = parse_config_text(text).unwrap();
        let cfg = validate_config(&m).unwrap();
        assert_eq!(cfg.window, 16);
        assert_eq!(cfg.tau, 0.5);
        assert_eq!(
            parse_config_text("oops"),
            Err(ConfigError::Syntax { line: 1 })
        );
    }
}
