//! Run manifests: one JSON record per executed stage, appended to
//! `manifest.jsonl` in the stage's output directory.
//!
//! Every artifact a stage writes is listed with its SHA-256. Stages that read
//! an artifact look it up in the manifest next to it and refuse files whose
//! digest no longer matches.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use v1snn::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the manifest's directory when possible, absolute otherwise.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub started_unix_s: u64,
    pub wallclock_s: f64,
    pub build: String,
    pub master_seed: u64,
    pub model_hash: String,
    /// Fully resolved config (TOML).
    pub config: String,
    pub datasets: Vec<Artifact>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// Free-form stage parameters (level, variant, reps, ...).
    pub notes: Vec<(String, String)>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::data(path, e.to_string()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Package version plus the git revision of the working directory, if any.
pub fn build_id() -> String {
    let rev = Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string());
    format!("v1snn {} ({})", env!("CARGO_PKG_VERSION"), rev.as_deref().unwrap_or("no git"))
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

fn relative_name(dir: &Path, path: &Path) -> String {
    let canon_dir = fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf());
    let canon = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    match canon.strip_prefix(&canon_dir) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => canon.to_string_lossy().into_owned(),
    }
}

/// Digest of `path`, recorded relative to the manifest directory `dir`.
pub fn artifact(dir: &Path, path: &Path) -> Result<Artifact> {
    Ok(Artifact {
        path: relative_name(dir, path),
        sha256: sha256_file(path)?,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Vec<RunManifest>> {
    let path = manifest_path(dir);
    let file = match fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::data(&path, e.to_string())),
    };
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::data(&path, format!("record {}: {e}", k + 1)))?);
    }
    Ok(out)
}

pub fn append_manifest(dir: &Path, record: &RunManifest) -> Result<()> {
    let line = serde_json::to_string(record).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut f = OpenOptions::new().create(true).append(true).open(manifest_path(dir))?;
    writeln!(f, "{line}")?;
    Ok(())
}

/// Checks `path` against the most recent manifest entry that produced it,
/// looking in its own directory first and then in enclosing ones (checkpoints
/// live in a subdirectory of the run that wrote them). Returns the verified
/// artifact record.
pub fn verify_input(path: &Path) -> Result<Artifact> {
    let own = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let canon_own = fs::canonicalize(own).unwrap_or_else(|_| own.to_path_buf());
    let listed = canon_own
        .ancestors()
        .filter(|dir| manifest_path(dir).exists())
        .map(|dir| {
            let name = relative_name(dir, path);
            Ok(read_manifest(dir)?.into_iter().rev().find_map(|m| m.outputs.into_iter().find(|a| a.path == name)))
        })
        .find_map(|r: Result<Option<Artifact>>| r.transpose())
        .transpose()?
        .ok_or_else(|| Error::data(path, format!("not listed in {} or an enclosing run manifest; only manifest-tracked artifacts are accepted", manifest_path(own).display())))?;
    let actual = sha256_file(path)?;
    if actual != listed.sha256 {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: format!("sha256 {}", listed.sha256),
            found: format!("sha256 {actual}"),
        });
    }
    Ok(Artifact {
        path: path.to_string_lossy().into_owned(),
        sha256: actual,
    })
}
