//! Run manifests: resolved config, its hash, and hashes of every input and
//! output file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    parallel: bool,
    seed: Option<u64>,
    config_sha256: String,
    config: &'a C,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex(&Sha256::digest(bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hashes(paths: &[PathBuf]) -> Result<Vec<FileHash>> {
    paths.iter().map(|p| Ok(FileHash { path: p.display().to_string(), sha256: sha256_file(p)? })).collect()
}

/// Writes the manifest to `path`. Feeding it back through `--config`
/// reproduces the run.
pub fn write_manifest<C: Serialize>(
    path: &Path,
    command: &str,
    config: &C,
    seed: Option<u64>,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let canonical = serde_json::to_vec(config)?;
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        parallel: cfg!(feature = "parallel"),
        seed,
        config_sha256: hex(&Sha256::digest(&canonical)),
        config,
        inputs: hashes(inputs)?,
        outputs: hashes(outputs)?,
    };
    std::fs::write(path, serde_json::to_string_pretty(&m)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// `<out>.manifest.json` next to a single output file.
pub fn beside(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

/// Refuses to write onto any input.
pub fn guard_outputs(inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    for o in outputs {
        let o_abs = std::fs::canonicalize(o).ok();
        for i in inputs {
            let same = match (&o_abs, std::fs::canonicalize(i).ok()) {
                (Some(a), Some(b)) => *a == b,
                _ => o == i,
            };
            if same {
                return Err(crate::Usage(format!("output {} would overwrite an input", o.display())).into());
            }
        }
    }
    Ok(())
}
