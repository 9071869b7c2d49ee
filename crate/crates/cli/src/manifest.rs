//! Reproducibility manifest, written into the output directory before any
//! result file. Re-running with an identical config digest and seed
//! reproduces byte-identical CSV/JSON outputs; only the timestamp here
//! differs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use bitectl_core::config::Config;

#[derive(Serialize)]
struct RunManifest<'a> {
    config_hash: String,
    command: String,
    tool_version: &'a str,
    created_utc: String,
    seed: Option<u64>,
}

/// Digest of the resolved (parsed and re-serialized) configuration.
pub fn config_hash(config: &Config) -> Result<String> {
    let canonical = serde_json::to_vec(config).context("serialize config")?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&canonical))))
}

/// Creates the output directory and writes manifest.json into it.
pub fn write(out_dir: &Path, config: &Config, seed: Option<u64>) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("create output directory {}", out_dir.display()))?;
    let manifest = RunManifest {
        config_hash: config_hash(config)?,
        command: std::env::args().skip(1).collect::<Vec<_>>().join(" "),
        tool_version: env!("CARGO_PKG_VERSION"),
        created_utc: chrono::Utc::now().to_rfc3339(),
        seed,
    };
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)
        .with_context(|| format!("write {}", path.display()))?;
    Ok(())
}
