//! Staged artifact output. Files are written to a sibling staging directory
//! and moved into the output directory only when the command succeeds; a
//! `run-manifest.txt` records the configuration, the input checksums and
//! the artifact checksums.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::error::{io, CliError, Result};

pub const RUN_MANIFEST: &str = "run-manifest.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| io(path, e))?))
}

/// Parsed run manifest: header keys (command, config, inputs) and artifact
/// checksums by relative path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub header: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Checksum(format!("malformed manifest line {line:?}")))?;
            match k.strip_prefix("artifact.") {
                Some(name) => m.artifacts.insert(name.to_string(), v.to_string()),
                None => m.header.insert(k.to_string(), v.to_string()),
            };
        }
        Ok(m)
    }

    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(RUN_MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        Self::parse(&text).map(Some)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# funscreen run manifest\n");
        for (k, v) in &self.header {
            out.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.artifacts {
            out.push_str(&format!("artifact.{k}={v}\n"));
        }
        out
    }

    /// Checks every listed artifact under `dir` against its checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, expected) in &self.artifacts {
            let path = dir.join(name);
            if !path.exists() {
                return Err(CliError::Checksum(format!("artifact {name} listed in {} is missing", dir.display())));
            }
            if &file_sha256(&path)? != expected {
                return Err(CliError::Checksum(format!(
                    "artifact {name} in {} does not match its recorded checksum",
                    dir.display()
                )));
            }
        }
        Ok(())
    }
}

/// Output directory under construction.
pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    files: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    committed: bool,
}

impl Staging {
    pub fn begin(out: &Path) -> Result<Self> {
        let name = out
            .file_name()
            .ok_or_else(|| CliError::Config(format!("output path {} has no final component", out.display())))?;
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let dir = parent.join(format!(".{}.staging-{}", name.to_string_lossy(), std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        Ok(Self {
            out: out.to_path_buf(),
            dir,
            files: BTreeMap::new(),
            inputs: BTreeMap::new(),
            committed: false,
        })
    }

    /// Records the checksum of an input file in the manifest.
    pub fn input(&mut self, key: &str, path: &Path) -> Result<()> {
        let sum = if path.is_dir() {
            // A directory input is a previous run; its manifest pins it.
            file_sha256(&path.join(RUN_MANIFEST)).or_else(|_| file_sha256(&path.join("manifest.txt")))?
        } else {
            file_sha256(path)?
        };
        self.inputs.insert(key.to_string(), sum);
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        let bytes = contents.as_ref();
        fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Plots never decide the outcome of a command.
    pub fn write_plot(&mut self, name: &str, svg: Option<String>) {
        if let Some(svg) = svg {
            if let Err(e) = self.write(name, svg) {
                warn!("skipping plot {name}: {e}");
            }
        }
    }

    /// Verifies any previous run in the output directory, then moves the
    /// staged files into place and writes the manifest last.
    pub fn commit(mut self, command: &str, settings: &Settings) -> Result<PathBuf> {
        let mut manifest = RunManifest::default();
        manifest.header.insert("command".into(), command.into());
        manifest.header.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        for (k, v) in settings.entries() {
            if k != "out" {
                manifest.header.insert(format!("config.{k}"), v.clone());
            }
        }
        for (k, v) in &self.inputs {
            manifest.header.insert(format!("input.{k}"), v.clone());
        }
        manifest.artifacts = self.files.clone();

        if let Some(previous) = RunManifest::read(&self.out)? {
            previous.verify(&self.out)?;
            if previous.header == manifest.header {
                for (name, sum) in &manifest.artifacts {
                    if let Some(old) = previous.artifacts.get(name) {
                        if old != sum {
                            return Err(CliError::Checksum(format!(
                                "re-run with identical configuration and inputs produced a different {name}"
                            )));
                        }
                    }
                }
            }
        }

        fs::create_dir_all(&self.out).map_err(|e| io(&self.out, e))?;
        for name in self.files.keys() {
            let from = self.dir.join(name);
            let to = self.out.join(name);
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
            }
            fs::rename(&from, &to).map_err(|e| io(&to, e))?;
        }
        let path = self.out.join(RUN_MANIFEST);
        fs::write(&path, manifest.render()).map_err(|e| io(&path, e))?;
        self.committed = true;
        let _ = fs::remove_dir_all(&self.dir);
        Ok(self.out.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}
