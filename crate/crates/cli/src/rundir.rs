//! Run directories named by a hash of the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    cli_version: &'static str,
    library_version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    anchors: &'a [&'a str],
    files: &'a [String],
    partial: bool,
    error: Option<String>,
}

pub struct RunDir {
    path: PathBuf,
    command: String,
    hash: String,
    anchors: Vec<&'static str>,
    files: Vec<String>,
}

impl RunDir {
    /// Creates `out/<hash>` for `command` and writes the resolved config.
    pub fn create(out: &Path, command: &str, config: &impl Serialize) -> Result<Self, CliError> {
        let json = serde_json::to_string_pretty(config).map_err(CliError::internal)?;
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update([0]);
        hasher.update(json.as_bytes());
        let hash = hex::encode(hasher.finalize());
        let path = out.join(format!("{command}-{}", &hash[..16]));
        fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        let mut dir = RunDir {
            path,
            command: command.to_string(),
            hash,
            anchors: Vec::new(),
            files: Vec::new(),
        };
        dir.write("config.json", json.as_bytes())?;
        Ok(dir)
    }

    pub fn anchor(&mut self, anchor: &'static str) {
        if !self.anchors.contains(&anchor) {
            self.anchors.push(anchor);
        }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Writes the manifest; `error` marks the outputs as partial.
    pub fn finish(mut self, error: Option<&CliError>) -> Result<PathBuf, CliError> {
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        let manifest = Manifest {
            tool: "rdlab",
            cli_version: env!("CARGO_PKG_VERSION"),
            library_version: rdlab::VERSION,
            command: &self.command,
            config_hash: &self.hash,
            anchors: &self.anchors,
            files: &files,
            partial: error.is_some(),
            error: error.map(|e| e.message.clone()),
        };
        let s = serde_json::to_string_pretty(&manifest).map_err(CliError::internal)? + "\n";
        self.write("manifest.json", s.as_bytes())?;
        Ok(self.path)
    }
}
