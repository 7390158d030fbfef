//! Output layout and stamped, atomic writes.

use std::fs;
use std::path::{Path, PathBuf};

use gauss_gp::datagen::write_atomic;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Provenance attached to every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
}

impl Header {
    pub fn new(config_hash: &str) -> Self {
        Self {
            tool: "gaussgp".into(),
            version: gauss_gp::VERSION.into(),
            config_sha256: config_hash.into(),
        }
    }

    /// One-line form used as a `#` comment in CSV and text files.
    pub fn line(&self) -> String {
        format!("{} {} config sha256:{}", self.tool, self.version, self.config_sha256)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Stamped<T> {
    header: Header,
    #[serde(flatten)]
    body: T,
}

/// Output directory tree of one experiment.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
    pub header: Header,
}

impl Layout {
    pub fn new(root: PathBuf, header: Header) -> Self {
        Self { root, header }
    }

    pub fn dataset(&self, run: usize) -> PathBuf {
        self.root.join("data").join(format!("run_{run:03}.csv"))
    }

    pub fn model(&self, family: &str, run: usize) -> PathBuf {
        self.root.join("models").join(family).join(format!("run_{run:03}.json"))
    }

    pub fn trace(&self, family: &str, run: usize) -> PathBuf {
        self.root.join("models").join(family).join(format!("run_{run:03}.trace.csv"))
    }

    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn ensure_parent(&self, path: &Path) -> Result<(), CliError> {
        if let Some(p) = path.parent() {
            fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
        }
        Ok(())
    }

    /// Writes text with the header as a leading `#` line.
    pub fn write_text(&self, path: &Path, body: &str) -> Result<(), CliError> {
        self.ensure_parent(path)?;
        let text = format!("# {}\n{body}", self.header.line());
        write_atomic(path, text.as_bytes()).map_err(|e| io_err(path, e))
    }

    /// Writes JSON with the header as a top-level `header` field.
    pub fn write_json<T: Serialize>(&self, path: &Path, body: &T) -> Result<(), CliError> {
        self.ensure_parent(path)?;
        let s = Stamped {
            header: self.header.clone(),
            body,
        };
        let json = serde_json::to_string_pretty(&s).map_err(|e| CliError::Config(e.to_string()))?;
        write_atomic(path, json.as_bytes()).map_err(|e| io_err(path, e))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(Header, T), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let s: Stamped<T> = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((s.header, s.body))
}

fn io_err(path: &Path, e: gauss_gp::Error) -> CliError {
    match e {
        gauss_gp::Error::Io(source) => CliError::io(path, source),
        other => other.into(),
    }
}
