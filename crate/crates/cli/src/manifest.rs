use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a run read and wrote. Passing the file back through `--config`
/// reruns it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest-{command}.json")
}

fn digests(paths: &[PathBuf]) -> anyhow::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, inputs: &[PathBuf], outputs: &[PathBuf]) -> anyhow::Result<Self> {
        Ok(Self {
            command: command.into(),
            config: config.clone(),
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
        })
    }

    /// Writes `manifest-{command}.json` so commands sharing an output
    /// directory keep separate manifests.
    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(manifest_name(&self.command));
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
