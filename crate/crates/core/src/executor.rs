// SPDX-License-Identifier: Apache-2.0

//! Runs rendered stage scripts against a backend.
//!
//! The mock backend writes the script, fabricates every report the stage
//! declares plus the stage's deliverables, and saves a checkpoint marker. The
//! external backend launches a configured command as a child process with a
//! scrubbed environment.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use flate2::{Compression, GzBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::stage::Stage;
use crate::template::{has_placeholders, RenderedScript};
use crate::workspace::{self, now_ms};

/// Route quality reports, in delivery order.
pub const ROUTE_REPORTS: [&str; 3] = ["route_summary.rpt", "postRoute_drc_max1M.rpt", "congestion.rpt"];

pub const DEFAULT_TIMEOUT_SECS: f64 = 300.0;

const EXCERPT_BYTES: usize = 4000;

/// Report files a stage must leave in `reports/`.
pub fn declared_reports(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Synthesis => &["synth_area.rpt", "synth_power.rpt", "synth_qor.rpt", "synth_timing.rpt"],
        Stage::Placement => &["place_summary.rpt", "place_timing.rpt"],
        Stage::Cts => &["cts_skew.rpt", "cts_timing.rpt"],
        Stage::Route => &ROUTE_REPORTS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Mock,
    ExternalCommand,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionBackend {
    pub kind: BackendKind,
    /// Command line with `{script}` and `{workspace}` slots; external kind only.
    #[serde(default)]
    pub command_template: String,
    /// Parent environment variables forwarded to the child.
    #[serde(default)]
    pub env_passthrough: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Mock only: stages whose runs fail.
    #[serde(default)]
    pub fail_stages: Vec<Stage>,
    /// Mock only: artificial run time.
    #[serde(default)]
    pub mock_delay_ms: u64,
}

impl Default for ExecutionBackend {
    fn default() -> Self {
        Self::mock()
    }
}

impl ExecutionBackend {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            command_template: String::new(),
            env_passthrough: Vec::new(),
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            fail_stages: Vec::new(),
            mock_delay_ms: 0,
        }
    }

    pub fn external(command_template: impl Into<String>) -> Self {
        Self { kind: BackendKind::ExternalCommand, command_template: command_template.into(), ..Self::mock() }
    }

    pub fn failing(stages: impl IntoIterator<Item = Stage>) -> Self {
        Self { fail_stages: stages.into_iter().collect(), ..Self::mock() }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if self.kind == BackendKind::ExternalCommand && self.command_template.trim().is_empty() {
            return Err(ExecError::InvalidBackend("external backend needs a command_template".into()));
        }
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return Err(ExecError::InvalidBackend("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ExecError> {
        let backend: Self = serde_json::from_str(text).map_err(|e| ExecError::InvalidBackend(e.to_string()))?;
        backend.validate()?;
        Ok(backend)
    }

    pub fn load(path: &Path) -> Result<Self, ExecError> {
        let text = fs::read_to_string(path).map_err(|e| ExecError::InvalidBackend(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub exit_status: RunStatus,
    pub stdout_excerpt: String,
    pub produced_reports: Vec<String>,
    pub checkpoint: Option<String>,
    pub duration_secs: f64,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("run exceeded {0} s")]
    Timeout(f64),
    #[error("workspace {0} does not exist")]
    WorkspaceMissing(PathBuf),
    #[error("script still contains placeholders")]
    UnrenderedScript,
    #[error("invalid backend configuration: {0}")]
    InvalidBackend(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

fn excerpt(text: &str) -> String {
    if text.len() <= EXCERPT_BYTES {
        return text.to_string();
    }
    let mut start = text.len() - EXCERPT_BYTES;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

/// Runs `script` in `workspace` on `backend`.
pub fn execute(script: &RenderedScript, backend: &ExecutionBackend, workspace: &Path) -> Result<ExecutionResult, ExecError> {
    backend.validate()?;
    if !workspace.is_dir() {
        return Err(ExecError::WorkspaceMissing(workspace.to_path_buf()));
    }
    if has_placeholders(&script.text) {
        return Err(ExecError::UnrenderedScript);
    }
    let started = Instant::now();
    workspace::prepare(workspace)?;
    let script_path = workspace.join("scripts").join(format!("{}.tcl", script.stage.long_name()));
    fs::write(&script_path, &script.text)?;

    let mut result = match backend.kind {
        BackendKind::Mock => run_mock(script, backend, workspace)?,
        BackendKind::ExternalCommand => run_external(script, backend, workspace, &script_path)?,
    };
    result.duration_secs = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Report text fabricated by the mock backend. Line 2 is the only
/// time-dependent line.
pub fn mock_report(script: &RenderedScript, report: &str, timestamp_ms: u64) -> String {
    let design = script.value("DESIGN").unwrap_or("unknown");
    let mut out = format!("# MOCK {} {design}\n# timestamp {timestamp_ms}\n", script.stage.long_name());
    out.push_str(&format!("# report {report}\n"));
    for (name, value) in &script.values {
        out.push_str(&format!("param {name} = {value}\n"));
    }
    for (name, value) in &script.env_exports {
        out.push_str(&format!("param env({name}) = {value}\n"));
    }
    out
}

fn mock_deliverables(stage: Stage, design: &str, top: &str) -> Vec<(String, String)> {
    let file = |name: String, body: String| (format!("outputs/{name}"), body);
    match stage {
        Stage::Synthesis => vec![
            file(format!("{design}.v"), format!("// MOCK netlist\nmodule {top} ();\nendmodule\n")),
            file(format!("{design}.sdc"), format!("# MOCK constraints for {design}\n")),
        ],
        Stage::Placement => vec![file(format!("{design}_place.def"), format!("# MOCK placed DEF for {design}\n"))],
        Stage::Cts => vec![file(format!("{design}_ccopt.spec"), format!("# MOCK clock tree spec for {design}\n"))],
        Stage::Route => vec![
            file(format!("{design}.gds"), format!("MOCK GDSII {design}\n")),
            file(format!("{design}.def"), format!("# MOCK routed DEF for {design}\n")),
            file(format!("{design}.lef"), format!("# MOCK abstract for {design}\n")),
            file(format!("{design}.spef"), format!("*SPEF MOCK {design}\n")),
            file(format!("{design}_final.v"), format!("// MOCK final netlist for {design}\n")),
        ],
    }
}

fn run_mock(script: &RenderedScript, backend: &ExecutionBackend, workspace: &Path) -> Result<ExecutionResult, ExecError> {
    if backend.mock_delay_ms > 0 {
        thread::sleep(Duration::from_millis(backend.mock_delay_ms));
    }
    let stage = script.stage;
    if backend.fail_stages.contains(&stage) {
        return Ok(ExecutionResult {
            exit_status: RunStatus::Failed,
            stdout_excerpt: format!("mock: injected failure for stage {}\n", stage.long_name()),
            produced_reports: Vec::new(),
            checkpoint: None,
            duration_secs: 0.0,
        });
    }
    let ts = now_ms();
    let mut log = String::new();
    let mut produced = Vec::new();
    for report in declared_reports(stage) {
        fs::write(workspace.join("reports").join(report), mock_report(script, report, ts))?;
        log.push_str(&format!("mock: wrote report {report}\n"));
        produced.push(report.to_string());
    }
    let design = script.value("DESIGN").unwrap_or("unknown");
    let top = script.value("TOP_NAME").unwrap_or(design);
    for (rel, body) in mock_deliverables(stage, design, top) {
        fs::write(workspace.join(&rel), body)?;
        log.push_str(&format!("mock: wrote {rel}\n"));
    }
    let label = script.value("CHECKPOINT").unwrap_or(stage.tool_name()).to_string();
    fs::write(
        workspace.join("checkpoints").join(format!("{label}.enc")),
        format!("MOCK checkpoint {label}\n"),
    )?;
    Ok(ExecutionResult {
        exit_status: RunStatus::Ok,
        stdout_excerpt: log,
        produced_reports: produced,
        checkpoint: Some(label),
        duration_secs: 0.0,
    })
}

fn run_external(
    script: &RenderedScript,
    backend: &ExecutionBackend,
    workspace: &Path,
    script_path: &Path,
) -> Result<ExecutionResult, ExecError> {
    let script_arg = script_path.to_string_lossy();
    let ws_arg = workspace.to_string_lossy();
    let mut words = backend
        .command_template
        .split_whitespace()
        .map(|w| w.replace("{script}", &script_arg).replace("{workspace}", &ws_arg));
    let program = words.next().ok_or_else(|| ExecError::InvalidBackend("empty command".into()))?;

    let mut cmd = Command::new(&program);
    cmd.args(words).current_dir(workspace).env_clear();
    for name in &backend.env_passthrough {
        if let Some(v) = std::env::var_os(name) {
            cmd.env(name, v);
        }
    }
    for (name, value) in &script.env_exports {
        cmd.env(name, value);
    }
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());

    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
            ExecError::BackendUnavailable(format!("{program}: {e}"))
        }
        _ => ExecError::Io(e),
    })?;

    let drain = |pipe: Option<Box<dyn Read + Send>>| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            if let Some(mut p) = pipe {
                let _ = p.read_to_end(&mut buf);
            }
            buf
        })
    };
    let out = drain(child.stdout.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
    let err = drain(child.stderr.take().map(|p| Box::new(p) as Box<dyn Read + Send>));

    let deadline = Instant::now() + Duration::from_secs_f64(backend.timeout_secs);
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ExecError::Timeout(backend.timeout_secs));
        }
        thread::sleep(Duration::from_millis(5));
    };
    let mut text = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
    text.push_str(&String::from_utf8_lossy(&err.join().unwrap_or_default()));

    let reports_dir = workspace.join("reports");
    let declared = declared_reports(script.stage);
    let produced: Vec<String> =
        declared.iter().filter(|r| reports_dir.join(r).is_file()).map(|r| r.to_string()).collect();

    let exit_status = if !status.success() {
        text.push_str(&format!("\nexit status: {status}\n"));
        RunStatus::Failed
    } else if produced.len() != declared.len() {
        let missing: Vec<&str> = declared.iter().copied().filter(|r| !produced.iter().any(|p| p == r)).collect();
        text.push_str(&format!("\nmissing reports: {}\n", missing.join(", ")));
        RunStatus::Failed
    } else {
        RunStatus::Ok
    };
    Ok(ExecutionResult {
        exit_status,
        stdout_excerpt: excerpt(&text),
        produced_reports: produced,
        checkpoint: None,
        duration_secs: 0.0,
    })
}

/// Newest completed checkpoint of `stage` recorded in the workspace manifest.
pub fn locate_checkpoint(workspace: &Path, stage: Stage) -> Option<String> {
    workspace::read_records(workspace)
        .into_iter()
        .filter(|r| r.stage == stage && r.complete)
        .max_by_key(|r| (r.timestamp_ms, r.seq))
        .map(|r| r.label)
}

const ARCHIVE_SUFFIXES: [&str; 3] = [".tar", ".tar.gz", ".tgz"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub patterns: Vec<String>,
    pub archive_name: String,
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("invalid artifact manifest: {0}")]
    InvalidManifest(String),
    #[error("no files match {0:?}")]
    NoMatches(Vec<String>),
    #[error("workspace {0} does not exist")]
    WorkspaceMissing(PathBuf),
    #[error("writing archive failed: {0}")]
    ArchiveWriteFailed(String),
}

impl ArtifactManifest {
    pub fn new(patterns: Vec<String>, archive_name: impl Into<String>) -> Result<Self, ArtifactError> {
        let m = Self { patterns, archive_name: archive_name.into() };
        m.validate()?;
        Ok(m)
    }

    /// Delivery formats collected after routing.
    pub fn deliverables(design: &str, version: &str) -> Self {
        Self {
            patterns: ["*.gds", "*.gds.gz", "*.def", "*.lef", "*.spef", "*.v"].map(String::from).to_vec(),
            archive_name: format!("{design}_{version}_artifacts.tar"),
        }
    }

    pub fn validate(&self) -> Result<(), ArtifactError> {
        if self.patterns.is_empty() {
            return Err(ArtifactError::InvalidManifest("no patterns".into()));
        }
        for p in &self.patterns {
            glob::Pattern::new(p).map_err(|e| ArtifactError::InvalidManifest(format!("{p}: {e}")))?;
        }
        let name = &self.archive_name;
        if name.contains('/') || !ARCHIVE_SUFFIXES.iter().any(|s| name.len() > s.len() && name.ends_with(s)) {
            return Err(ArtifactError::InvalidManifest(format!("`{name}` lacks an archive suffix {ARCHIVE_SUFFIXES:?}")));
        }
        Ok(())
    }

    fn compressed(&self) -> bool {
        !self.archive_name.ends_with(".tar")
    }
}

/// Files under `workspace` matching the manifest, as sorted relative paths.
pub fn matching_files(workspace: &Path, manifest: &ArtifactManifest) -> Result<Vec<String>, ArtifactError> {
    let patterns: Vec<(glob::Pattern, bool)> = manifest
        .patterns
        .iter()
        .map(|p| glob::Pattern::new(p).map(|g| (g, p.contains('/'))))
        .collect::<Result<_, _>>()
        .map_err(|e| ArtifactError::InvalidManifest(e.to_string()))?;
    let mut out = Vec::new();
    for entry in WalkDir::new(workspace).sort_by_file_name() {
        let entry = entry.map_err(|e| ArtifactError::ArchiveWriteFailed(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(workspace).expect("walk stays under root");
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        let name = entry.file_name().to_string_lossy();
        if name == manifest.archive_name || name.starts_with(".") {
            continue;
        }
        if patterns.iter().any(|(g, by_path)| if *by_path { g.matches(&rel) } else { g.matches(&name) }) {
            out.push(rel);
        }
    }
    out.sort();
    Ok(out)
}

/// Packs matching files into a byte-stable archive in the workspace root.
pub fn collect_artifacts(workspace: &Path, manifest: &ArtifactManifest) -> Result<PathBuf, ArtifactError> {
    manifest.validate()?;
    if !workspace.is_dir() {
        return Err(ArtifactError::WorkspaceMissing(workspace.to_path_buf()));
    }
    let files = matching_files(workspace, manifest)?;
    if files.is_empty() {
        return Err(ArtifactError::NoMatches(manifest.patterns.clone()));
    }
    let fail = |e: io::Error| ArtifactError::ArchiveWriteFailed(e.to_string());

    let mut builder = tar::Builder::new(Vec::new());
    builder.mode(tar::HeaderMode::Deterministic);
    for rel in &files {
        let data = fs::read(workspace.join(rel)).map_err(fail)?;
        let mut header = tar::Header::new_gnu();
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, rel, data.as_slice()).map_err(fail)?;
    }
    let tar_bytes = builder.into_inner().map_err(fail)?;
    let bytes = if manifest.compressed() {
        let mut gz = GzBuilder::new().mtime(0).write(Vec::new(), Compression::default());
        gz.write_all(&tar_bytes).map_err(fail)?;
        gz.finish().map_err(fail)?
    } else {
        tar_bytes
    };

    let dest = workspace.join(&manifest.archive_name);
    let tmp = workspace.join(format!(".{}.tmp", manifest.archive_name));
    fs::write(&tmp, bytes).map_err(fail)?;
    fs::rename(&tmp, &dest).map_err(fail)?;
    Ok(dest)
}
