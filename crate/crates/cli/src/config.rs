//! Config file loading and CLI override merging. A config file is a flat
//! JSON object of option values; a previously written manifest is also
//! accepted (its embedded `config` object is used), so any run can be
//! reproduced from its manifest.

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use std::path::Path;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
    let effective = match value.get("config") {
        Some(inner) if value.get("command").is_some() => inner.clone(),
        _ => value,
    };
    if !effective.is_object() {
        bail!("config must be a JSON object");
    }
    serde_json::from_value(effective).with_context(|| format!("interpreting {}", path.display()))
}

/// Builds a rayon pool with the requested worker count (0 = library default).
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?)
}

/// Merge helper: CLI-provided values win over config-file values.
pub fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

pub fn pick_opt<T>(cli: Option<T>, file: Option<T>) -> Option<T> {
    cli.or(file)
}
