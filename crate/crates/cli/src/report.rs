//! Run reports and the error split between bad configuration and failures
//! at runtime.
//!
//! Every subcommand writes `report.json` shaped as `{"body": ..,
//! "elapsed_secs": ..}`. The body holds everything deterministic about the
//! run, always including the seed and a hash of the resolved configuration;
//! wall-clock time stays outside it so two runs with the same config and
//! seed produce byte-identical bodies.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

use bilink_core::config::{config_hash, load_train_config};
use bilink_core::train::TrainConfig;

use crate::args::TrainOverlay;

/// A mistake in flags or configuration, reported on exit code 2. Library
/// config errors are recognized separately; this covers checks only the
/// command layer can make.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Serialize)]
struct RunReport<T: Serialize> {
    body: T,
    elapsed_secs: f64,
}

/// Writes `report.json` into `out`, wrapping the body with the elapsed
/// wall-clock time.
pub fn write_report<T: Serialize>(out: &Path, body: &T, started: Instant) -> anyhow::Result<()> {
    let report = RunReport { body, elapsed_secs: started.elapsed().as_secs_f64() };
    let path = out.join("report.json");
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Hex SHA-256 of a resolved configuration. Machine-local details (the
/// diagnostics directory) are cleared first so equal configs hash equally
/// across machines.
pub fn hash_config<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(config_hash(value)?)
}

/// Strips the diagnostics directory before hashing or reporting.
pub fn portable(cfg: &TrainConfig) -> TrainConfig {
    TrainConfig { dump_dir: String::new(), ..cfg.clone() }
}

/// Resolves the effective training configuration: defaults, then the
/// config file, then individual flags; diagnostics go to the output
/// directory.
pub fn resolve_train_config(overlay: &TrainOverlay, out: &Path) -> anyhow::Result<TrainConfig> {
    let mut cfg = match &overlay.config {
        Some(path) => load_train_config(path)?,
        None => TrainConfig::default(),
    };
    if let Some(lr) = overlay.lr {
        cfg.lr = lr;
    }
    if let Some(beta) = overlay.beta {
        cfg.beta = beta;
    }
    if let Some(temp) = overlay.temp {
        cfg.temperature = temp;
    }
    if let Some(epochs) = overlay.epochs {
        cfg.epochs = epochs;
    }
    if let Some(batch) = overlay.batch_size {
        cfg.batch_size = batch;
    }
    if let Some(seed) = overlay.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = overlay.workers {
        cfg.workers = workers;
    }
    cfg.dump_dir = out.display().to_string();
    cfg.validate()?;
    Ok(cfg)
}

/// Creates the output directory and returns it as owned.
pub fn ensure_out_dir(out: &Path) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out.to_path_buf())
}
