//! Output directory handling: results CSV, run manifest, summaries.
//! Floats are written with the shortest round-trip representation so reruns
//! are byte-identical.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct OutDir {
    path: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path)
            .with_context(|| format!("creating output directory {}", path.display()))?;
        Ok(OutDir {
            path: path.to_path_buf(),
        })
    }


    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.file(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| {
            format!("creating {}", p.display())
        })?))
    }

    /// Writes the manifest; called once with `status = "running"` before any
    /// results exist and replaced atomically on completion.
    pub fn write_manifest(
        &self,
        command: &str,
        config: &impl Serialize,
        status: &str,
        results: &[&str],
    ) -> Result<()> {
        let manifest = json!({
            "command": command,
            "code_version": env!("CARGO_PKG_VERSION"),
            "created": chrono::Utc::now().to_rfc3339(),
            "status": status,
            "config": config,
            "results": results,
        });
        let tmp = self.file("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&manifest)?)?;
        fs::rename(&tmp, self.file("manifest.json"))?;
        Ok(())
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
