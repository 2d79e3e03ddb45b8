//! Content-addressed record of the artifacts under an output directory.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, PipelineError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of the stage's parameters, input files and upstream keys.
    pub key: String,
    /// Artifact path relative to the output directory, mapped to its hash.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            stages: BTreeMap::new(),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_error(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

impl Manifest {
    pub fn path(output: &Path) -> PathBuf {
        output.join(MANIFEST_FILE)
    }

    /// An absent manifest is empty; an unreadable one is an error.
    pub fn load(output: &Path) -> Result<Self> {
        let path = Self::path(output);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Manifest::default()),
            Err(e) => return Err(io_error(&path, e)),
        };
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| PipelineError::Manifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(PipelineError::Manifest {
                path,
                message: format!("version {} is not supported", manifest.version),
            });
        }
        Ok(manifest)
    }

    /// Writes through a temporary file so a crash never leaves a torn manifest.
    pub fn save(&self, output: &Path) -> Result<()> {
        std::fs::create_dir_all(output).map_err(|e| io_error(output, e))?;
        let path = Self::path(output);
        let tmp = output.join(format!("{MANIFEST_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(self).map_err(|e| PipelineError::Manifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
        text.push('\n');
        std::fs::write(&tmp, text).map_err(|e| io_error(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| io_error(&path, e))
    }

    /// The stage's record if every listed file still has its recorded hash.
    pub fn intact(&self, output: &Path, stage: &str) -> Option<&StageRecord> {
        let record = self.stages.get(stage)?;
        let ok = record
            .files
            .iter()
            .all(|(rel, hash)| sha256_file(&output.join(rel)).is_ok_and(|h| &h == hash));
        ok.then_some(record)
    }
}
