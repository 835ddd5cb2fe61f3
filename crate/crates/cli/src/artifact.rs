// SPDX-License-Identifier: Apache-2.0

//! File access: not-found mapping and atomic writes.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use tempfile::NamedTempFile;

use crate::error::{failed, CliError, CliResult};

fn map_read(path: &Path, e: std::io::Error) -> CliError {
    if e.kind() == ErrorKind::NotFound {
        CliError::FileNotFound(path.to_path_buf())
    } else {
        failed(anyhow::Error::new(e).context(format!("reading {}", path.display())))
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| map_read(path, e))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| map_read(path, e))
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp =
        NamedTempFile::new_in(&dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes).context("writing temporary file")?;
    tmp.as_file().sync_all().context("syncing temporary file")?;
    tmp.persist(path)
        .map_err(|e| failed(anyhow::Error::new(e.error).context(format!("renaming into {}", path.display()))))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(failed)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Comment line recording provenance at the top of text artifacts.
pub fn provenance_comment(config_digest: &str, prng_seed: u64) -> String {
    format!("# config_digest={config_digest} prng_seed={prng_seed}\n")
}

/// Reads `key=value` pairs from a leading provenance comment.
pub fn parse_provenance_comment(text: &str) -> Option<(String, u64)> {
    let line = text.lines().find(|l| l.starts_with("# config_digest="))?;
    let mut digest = None;
    let mut seed = None;
    for part in line.trim_start_matches('#').split_whitespace() {
        match part.split_once('=') {
            Some(("config_digest", v)) => digest = Some(v.to_string()),
            Some(("prng_seed", v)) => seed = v.parse().ok(),
            _ => {}
        }
    }
    Some((digest?, seed?))
}
