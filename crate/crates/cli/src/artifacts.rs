//! Output directory with a manifest of every file written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
struct Entry {
    path: String,
    role: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    experiment: &'a str,
    files: &'a [Entry],
}

pub struct ArtifactDir {
    root: PathBuf,
    command: &'static str,
    experiment: String,
    entries: Vec<Entry>,
}

pub const MANIFEST: &str = "manifest.json";

impl ArtifactDir {
    pub fn create(root: &Path, command: &'static str, experiment: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            command,
            experiment: experiment.to_string(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, role: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.entries.push(Entry {
            path: name.to_string(),
            role: role.to_string(),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, role: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, role, s)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let manifest = Manifest {
            command: self.command,
            experiment: &self.experiment,
            files: &self.entries,
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        let path = self.root.join(MANIFEST);
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.root)
    }
}
