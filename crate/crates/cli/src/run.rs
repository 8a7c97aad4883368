//! Run directories: `<config hash>-<UTC timestamp>` holding stage outputs,
//! a `manifest.txt`, the canonical `config.toml` and, on failure, `FAILED`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::Config;

pub struct RunDir {
    pub path: PathBuf,
    command: String,
    artifacts: Vec<String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunDir {
    pub fn create(cfg: &Config, command: &str) -> anyhow::Result<Self> {
        fs::create_dir_all(&cfg.output_dir)?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
        let base = format!("{}-{stamp}", cfg.hash());
        let mut path = cfg.output_dir.join(&base);
        let mut k = 1;
        while path.exists() {
            path = cfg.output_dir.join(format!("{base}-{k}"));
            k += 1;
        }
        fs::create_dir_all(&path)?;
        fs::write(path.join("config.toml"), cfg.echo())?;
        Ok(RunDir { path, command: command.to_string(), artifacts: Vec::new() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Writes `contents` to `name` and records it in the manifest.
    pub fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        let p = self.file(name);
        fs::write(&p, contents)?;
        self.artifact(name);
        Ok(p)
    }

    /// Records an artifact written by other means.
    pub fn artifact(&mut self, name: &str) {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
    }

    /// Writes the manifest and, for a failed run, the `FAILED` marker.
    pub fn finish(&self, cfg: &Config, error: Option<&anyhow::Error>) -> anyhow::Result<()> {
        let mut m = String::new();
        writeln!(m, "command = {}", self.command)?;
        writeln!(m, "status = {}", if error.is_some() { "failed" } else { "ok" })?;
        writeln!(m, "config_hash = {}", cfg.hash())?;
        writeln!(m, "version = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))?;
        writeln!(m, "data = {}", cfg.data.path.display())?;
        if cfg.data.path.is_file() {
            writeln!(m, "data_sha256 = {}", sha256_file(&cfg.data.path)?)?;
        }
        let seeds = cfg.seeds();
        writeln!(m, "seed.root = {}", seeds.root)?;
        for (label, s) in seeds.pairs() {
            writeln!(m, "seed.{label} = {s}")?;
        }
        for a in &self.artifacts {
            let p = self.file(a);
            if p.is_file() {
                writeln!(m, "artifact.{a} = {}", sha256_file(&p)?)?;
            }
        }
        fs::write(self.file("manifest.txt"), m)?;
        if let Some(e) = error {
            fs::write(self.file("FAILED"), format!("{e:#}\n"))?;
        }
        Ok(())
    }
}
