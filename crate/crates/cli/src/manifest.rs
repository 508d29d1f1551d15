use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use improvkit::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command run: what was asked, what was read, what was written.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects artifacts under one output directory and writes `manifest.json` last.
pub struct Run {
    out: Option<PathBuf>,
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    pub fn new(command: &str, out: Option<&Path>, config: serde_json::Value, seed: Option<u64>) -> Result<Self> {
        if let Some(dir) = out {
            fs::create_dir_all(dir)?;
        }
        Ok(Self {
            out: out.map(Path::to_path_buf),
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                config,
                seed,
                inputs: Vec::new(),
                artifacts: Vec::new(),
                wall_clock_seconds: 0.0,
            },
            started: Instant::now(),
        })
    }

    pub fn set_config(&mut self, config: serde_json::Value) {
        self.manifest.config = config;
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: digest(&bytes),
        });
        Ok(())
    }

    /// Writes `name` under the output directory, or to stdout when there is none.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let Some(dir) = &self.out else {
            print!("{contents}");
            return Ok(());
        };
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.manifest.artifacts.push(FileDigest {
            path: name.to_string(),
            sha256: digest(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        if let Some(dir) = &self.out {
            let text = serde_json::to_string_pretty(&self.manifest)
                .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
            fs::write(dir.join("manifest.json"), text + "\n")?;
            log::info!("wrote {} artifacts to {}", self.manifest.artifacts.len(), dir.display());
        }
        Ok(())
    }
}
