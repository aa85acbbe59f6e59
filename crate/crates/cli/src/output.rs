//! Artifacts written by a run, hashed into `manifest.tsv`.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.tsv";

/// Collects artifacts for one output directory.
pub struct Artifacts {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl Artifacts {
    /// Artifacts live next to the primary output `out`.
    pub fn beside(out: &Path) -> Result<Self, CliError> {
        let dir = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        Self::in_dir(&dir)
    }

    pub fn in_dir(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    /// Writes `name` (relative to the directory) and records its hash.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        let digest = hex::encode(Sha256::digest(contents.as_bytes()));
        self.entries.retain(|(n, _)| n != name);
        self.entries.push((name.to_string(), digest));
        Ok(())
    }

    /// Writes `manifest.tsv` listing every artifact as `path<TAB>sha256`.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let mut text = String::new();
        for (name, digest) in &self.entries {
            text.push_str(&format!("{name}\t{digest}\n"));
        }
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn file_name(path: &Path) -> Result<String, CliError> {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::Config(format!("invalid output path {}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}
