//! Result tables and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::Settings;
use crate::error::{CliError, Result};

/// Collects output tables for one run in a directory.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
    summary: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| out_err(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new(), summary: BTreeMap::new() })
    }

    pub fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| out_err(&path, e))?;
        w.write_record(header).map_err(|e| out_err(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| out_err(&path, e))?;
        }
        w.flush().map_err(|e| out_err(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Adds a headline number to the manifest's `results` section.
    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.summary.insert(key.to_string(), value.into());
    }

    /// Writes `manifest.json` with keys in sorted order: the command, its
    /// resolved settings and the files produced. Thread count and output
    /// location are left out; neither affects the numbers.
    pub fn finish(mut self, settings: &Settings) -> Result<()> {
        self.written.sort();
        let manifest = json!({
            "command": settings.command.to_string(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": settings.entries(),
            "results": self.summary,
            "outputs": self.written,
        });
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| out_err(&path, e))
    }
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output { path: path.to_path_buf(), message: e.to_string() }
}

/// Shortest round-tripping text for a float, in exponent form for very
/// small or large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
