//! Provenance stamps and atomic file writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{io_err, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed, config hash and tool version of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamp {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Stamp {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
        }
    }

    pub fn meta(&self) -> Value {
        json!({
            "tool": "diff2dist",
            "version": VERSION,
            "command": self.command,
            "seed": self.seed,
            "config_sha256": self.config_hash,
        })
    }

    /// `# diff2dist <version> command=<c> seed=<s> config_sha256=<h>`
    pub fn csv_header(&self) -> String {
        format!(
            "# diff2dist {VERSION} command={} seed={} config_sha256={}\n",
            self.command, self.seed, self.config_hash
        )
    }

    pub fn csv(&self, body: &str) -> String {
        let mut out = self.csv_header();
        out.push_str(body);
        out
    }
}

/// Files staged in memory and written together once every one is ready.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn add(&mut self, path: PathBuf, contents: String) {
        self.files.push((path, contents));
    }

    pub fn paths(&self) -> Vec<&Path> {
        self.files.iter().map(|(p, _)| p.as_path()).collect()
    }

    /// Writes every file through a temporary sibling and a rename.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (path, contents) in self.files {
            write_atomic(&path, contents.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| e.error).map_err(io_err(path))?;
    Ok(())
}

/// Strips `#` comment lines.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
