// SPDX-License-Identifier: Apache-2.0

//! Versioned workspace directories, completion manifests and per-version
//! locks.
//!
//! ```text
//! <root>/<design>/rtl/
//! <root>/<design>/synthesis/<syn_ver>/{scripts,reports,outputs,checkpoints,manifest}/
//! <root>/<design>/impl/<impl_ver>/{scripts,reports,outputs,checkpoints,manifest}/
//! ```
//!
//! Every finished stage run leaves one JSON record in `manifest/`, written
//! to a temporary file and renamed into place. A stage counts as complete in
//! a workspace once a record with `complete: true` exists for it.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::stage::Stage;

pub const SUBDIRS: [&str; 5] = ["scripts", "reports", "outputs", "checkpoints", "manifest"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkspaceLayout {
    root: PathBuf,
}

impl WorkspaceLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn rtl_dir(&self, design: &str) -> PathBuf {
        self.root.join(design).join("rtl")
    }

    pub fn synthesis_dir(&self, design: &str, syn_ver: &str) -> PathBuf {
        self.root.join(design).join("synthesis").join(syn_ver)
    }

    pub fn impl_dir(&self, design: &str, impl_ver: &str) -> PathBuf {
        self.root.join(design).join("impl").join(impl_ver)
    }

    /// Upstream netlist written by synthesis.
    pub fn netlist(&self, design: &str, syn_ver: &str) -> PathBuf {
        self.synthesis_dir(design, syn_ver).join("outputs").join(format!("{design}.v"))
    }

    pub fn constraints(&self, design: &str, syn_ver: &str) -> PathBuf {
        self.synthesis_dir(design, syn_ver).join("outputs").join(format!("{design}.sdc"))
    }
}

/// Creates the workspace directory and its standard subdirectories.
pub fn prepare(dir: &Path) -> io::Result<()> {
    for sub in SUBDIRS {
        fs::create_dir_all(dir.join(sub))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub stage: Stage,
    pub version: String,
    /// Checkpoint label saved by this run.
    pub label: String,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub complete: bool,
    #[serde(default)]
    pub reports: Vec<String>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn record_file_name(stage: Stage, seq: u32) -> String {
    format!("{}-{seq:04}.json", stage.tool_name())
}

fn parse_record_name(name: &str) -> Option<(Stage, u32)> {
    let stem = name.strip_suffix(".json")?;
    let (stage, seq) = stem.rsplit_once('-')?;
    Some((stage.parse().ok()?, seq.parse().ok()?))
}

/// Next free sequence number for `stage` in the workspace manifest.
pub fn next_seq(dir: &Path, stage: Stage) -> u32 {
    let Ok(entries) = fs::read_dir(dir.join("manifest")) else { return 1 };
    entries
        .filter_map(|e| e.ok())
        .filter_map(|e| parse_record_name(&e.file_name().to_string_lossy()))
        .filter(|(s, _)| *s == stage)
        .map(|(_, seq)| seq)
        .max()
        .map_or(1, |m| m + 1)
}

/// Writes a manifest record atomically.
pub fn write_record(dir: &Path, record: &ManifestRecord) -> io::Result<PathBuf> {
    let manifest = dir.join("manifest");
    fs::create_dir_all(&manifest)?;
    let name = record_file_name(record.stage, record.seq);
    let tmp = manifest.join(format!(".{name}.tmp"));
    let dest = manifest.join(name);
    let body = serde_json::to_vec_pretty(record).map_err(io::Error::other)?;
    fs::write(&tmp, body)?;
    fs::rename(&tmp, &dest)?;
    Ok(dest)
}

/// All readable manifest records, ordered by file name. Unreadable records are
/// skipped with a warning.
pub fn read_records(dir: &Path) -> Vec<ManifestRecord> {
    let Ok(entries) = fs::read_dir(dir.join("manifest")) else { return Vec::new() };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .filter_map(|p| {
            let parsed = fs::read(&p)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<ManifestRecord>(&b).map_err(|e| e.to_string()));
            match parsed {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("ignoring corrupted manifest {}: {e}", p.display());
                    None
                }
            }
        })
        .collect()
}

pub fn is_complete(dir: &Path, stage: Stage) -> bool {
    read_records(dir).iter().any(|r| r.stage == stage && r.complete)
}

/// In-process registry of workspaces with a run in flight.
#[derive(Debug, Default)]
pub struct WorkspaceLocks {
    held: Mutex<HashSet<PathBuf>>,
}

impl WorkspaceLocks {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Claims `dir`, or returns `None` if another run holds it.
    pub fn try_acquire(self: &Arc<Self>, dir: &Path) -> Option<WorkspaceGuard> {
        let mut held = self.held.lock().unwrap_or_else(|e| e.into_inner());
        if held.insert(dir.to_path_buf()) {
            Some(WorkspaceGuard { locks: Arc::clone(self), dir: dir.to_path_buf() })
        } else {
            None
        }
    }

    pub fn is_held(&self, dir: &Path) -> bool {
        self.held.lock().unwrap_or_else(|e| e.into_inner()).contains(dir)
    }
}

#[derive(Debug)]
pub struct WorkspaceGuard {
    locks: Arc<WorkspaceLocks>,
    dir: PathBuf,
}

impl WorkspaceGuard {
    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Drop for WorkspaceGuard {
    fn drop(&mut self) {
        self.locks.held.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.dir);
    }
}
