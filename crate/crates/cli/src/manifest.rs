//! Run manifests and atomic artifact writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub size: u64,
}

/// Sizes and a content hash of the `{name}_*` files of a dataset directory,
/// in name order.
#[derive(Clone, Debug, Serialize)]
pub struct Fingerprint {
    pub files: Vec<FileEntry>,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub dataset: Option<Fingerprint>,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<PathBuf>,
}

pub fn fingerprint(dir: &Path, name: &str) -> std::io::Result<Fingerprint> {
    let prefix = format!("{name}_");
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| p.file_name().is_some_and(|f| f.to_string_lossy().starts_with(&prefix)))
        .collect();
    paths.sort();
    let mut hasher = Sha256::new();
    let mut files = Vec::with_capacity(paths.len());
    for p in paths {
        let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let bytes = fs::read(&p)?;
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
        files.push(FileEntry {
            name,
            size: bytes.len() as u64,
        });
    }
    Ok(Fingerprint {
        files,
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> std::io::Result<PathBuf> {
        let path = out.join("manifest.json");
        let text = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        write_atomic(&path, &text)?;
        Ok(path)
    }
}
