//! Flat key=value training configuration files and config hashing.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{BiLinkError, Result};
use crate::train::TrainConfig;

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| {
        BiLinkError::Config(format!("cannot parse value {value:?} for key {key}"))
    })
}

/// Parses a config in `key = value` lines. Blank lines and `#` comments are
/// skipped, keys must be TrainConfig fields, each at most once; absent keys
/// keep their defaults.
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut seen = std::collections::BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(BiLinkError::Config(format!(
                "line {}: expected key = value, got {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(BiLinkError::Config(format!("duplicate key {key}")));
        }
        match key {
            "lr" => cfg.lr = parse_value(key, value)?,
            "warmup_steps" => cfg.warmup_steps = parse_value(key, value)?,
            "weight_decay" => cfg.weight_decay = parse_value(key, value)?,
            "epochs" => cfg.epochs = parse_value(key, value)?,
            "batch_size" => cfg.batch_size = parse_value(key, value)?,
            "temperature" => cfg.temperature = parse_value(key, value)?,
            "beta" => cfg.beta = parse_value(key, value)?,
            "t_sharp" => cfg.t_sharp = parse_value(key, value)?,
            "em_rounds" => cfg.em_rounds = parse_value(key, value)?,
            "seed" => cfg.seed = parse_value(key, value)?,
            "workers" => cfg.workers = parse_value(key, value)?,
            "backward_branch" => cfg.backward_branch = parse_value(key, value)?,
            "desc_tokens" => cfg.desc_tokens = parse_value(key, value)?,
            "dump_dir" => cfg.dump_dir = value.to_string(),
            other => {
                return Err(BiLinkError::Config(format!("unknown config key {other}")));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    parse_train_config(&fs::read_to_string(path)?)
}

/// Hex SHA-256 of the value's canonical JSON form. Field order follows the
/// struct declaration, so equal configs hash equally everywhere.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
