use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What was run, on which inputs, with which settings.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub threads: Option<usize>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<InputDigest> {
    let file = File::open(path).with_context(|| format!("{}: cannot open", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = reader
            .read(&mut buf)
            .with_context(|| format!("{}: read failed", path.display()))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

/// Collects manifest fields while a command runs.
pub struct Recorder {
    started: Instant,
    subcommand: String,
    threads: Option<usize>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

impl Recorder {
    pub fn new(subcommand: &str, threads: Option<usize>) -> Self {
        Recorder {
            started: Instant::now(),
            subcommand: subcommand.to_string(),
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
            config: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        self.config = serde_json::to_value(config)?;
        Ok(())
    }

    /// Writes `<primary output>.manifest.json` and returns its path.
    pub fn finish(self, argv: Vec<String>) -> Result<Option<PathBuf>> {
        let Some(primary) = self.outputs.first().cloned() else {
            return Ok(None);
        };
        let inputs = self.inputs.iter().map(|p| sha256_file(p)).collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: "hinlp",
            version: env!("CARGO_PKG_VERSION"),
            command: argv,
            subcommand: self.subcommand,
            config: self.config,
            seeds: self.seeds,
            threads: self.threads,
            inputs,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(&primary);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("{}: cannot write", path.display()))?;
        Ok(Some(path))
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    sibling(output, "manifest.json")
}

/// `dir/name.ext` → `dir/name.ext.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}
