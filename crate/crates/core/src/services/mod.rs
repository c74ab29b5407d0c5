// SPDX-License-Identifier: Apache-2.0

//! The four stage services.
//!
//! Each run validates its request against the parameter catalog, claims a
//! versioned workspace, renders the stage template and hands the script to
//! the executor. Synthesis and placement create new versions; CTS and route
//! extend the placement workspace named by `impl_ver`.

mod requests;
mod templates;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use requests::{CtsRequest, PlacementRequest, RouteRequest, SynthRequest};
pub use templates::{TemplateSet, TemplateSetError};

use crate::catalog::{format_value, Catalog};
use crate::executor::{self, ArtifactError, ArtifactManifest, ExecError, ExecutionBackend, RunStatus};
use crate::stage::Stage;
use crate::template::{render, Origin, ParamBinding, RenderError};
use crate::version::{self, check_label};
use crate::workspace::{self, now_ms, ManifestRecord, WorkspaceLayout, WorkspaceLocks};

pub use crate::version::make_impl_ver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Success,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl FieldError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }
}

fn describe(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("{}: {}", e.field, e.reason)).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {}", describe(.0))]
    InvalidRequest(Vec<FieldError>),
    #[error("workspace conflict: {0}")]
    WorkspaceConflict(String),
    #[error("missing upstream {stage} version `{version}`")]
    MissingUpstream { stage: Stage, version: String },
    #[error("executor failure: {0}")]
    ExecutorFailure(#[from] ExecError),
    #[error("artifact collection failed: {0}")]
    ArtifactFailure(#[from] ArtifactError),
    #[error("template rendering failed: {0}")]
    Render(#[from] RenderError),
    #[error("workspace i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable kind.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::WorkspaceConflict(_) => "workspace_conflict",
            ServiceError::MissingUpstream { .. } => "missing_upstream",
            ServiceError::ExecutorFailure(_) => "executor_failure",
            ServiceError::ArtifactFailure(_) => "artifact_failure",
            ServiceError::Render(_) => "render_failure",
            ServiceError::Io(_) => "io_failure",
        }
    }

    pub fn is_client_error(&self) -> bool {
        matches!(
            self,
            ServiceError::InvalidRequest(_) | ServiceError::WorkspaceConflict(_) | ServiceError::MissingUpstream { .. }
        )
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ServiceError::InvalidRequest(vec![FieldError::new(field, reason)])
    }
}

/// Skew objective handed to the CTS engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtsConstraints {
    pub objective: String,
    pub target_skew_ns: f64,
    pub max_transition_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResponse {
    pub status: Status,
    pub stage: Stage,
    /// Version produced (syn_ver for synthesis, impl_ver otherwise).
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upstream_version: Option<String>,
    pub rendered_tcl: String,
    pub report_paths: Vec<String>,
    pub log_excerpt: String,
    /// User-supplied parameters by request key.
    pub params: BTreeMap<String, Value>,
    pub provenance: BTreeMap<String, Origin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<CtsConstraints>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub root: PathBuf,
    pub backend: ExecutionBackend,
    /// Overrides the templates' library root.
    pub lib_root: Option<String>,
}

impl ServiceConfig {
    pub fn mock(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), backend: ExecutionBackend::mock(), lib_root: None }
    }
}

/// Handle on the four services. Cloning shares the lock registry.
#[derive(Debug, Clone)]
pub struct StageServices {
    layout: WorkspaceLayout,
    backend: Arc<ExecutionBackend>,
    lib_root: Option<String>,
    locks: Arc<WorkspaceLocks>,
    templates: Arc<TemplateSet>,
    catalog: &'static Catalog,
}

struct Job {
    stage: Stage,
    design: String,
    dir: PathBuf,
    version: String,
    upstream_version: Option<String>,
    params: BTreeMap<String, Value>,
    structural: Vec<(&'static str, String)>,
}

impl StageServices {
    pub fn new(config: ServiceConfig) -> Self {
        Self::with_templates(config, TemplateSet::builtin())
    }

    pub fn with_templates(config: ServiceConfig, templates: TemplateSet) -> Self {
        Self {
            layout: WorkspaceLayout::new(config.root),
            backend: Arc::new(config.backend),
            lib_root: config.lib_root,
            locks: WorkspaceLocks::new(),
            templates: Arc::new(templates),
            catalog: Catalog::builtin(),
        }
    }

    pub fn layout(&self) -> &WorkspaceLayout {
        &self.layout
    }

    pub fn catalog(&self) -> &'static Catalog {
        self.catalog
    }

    pub fn backend(&self) -> &ExecutionBackend {
        &self.backend
    }

    /// Validates `fields` (request key to value) for `stage`.
    fn validate(&self, stage: Stage, fields: BTreeMap<String, Value>) -> Result<BTreeMap<String, Value>, ServiceError> {
        let mut errors = Vec::new();
        let mut out = BTreeMap::new();
        for (key, value) in fields {
            match self.catalog.by_key(stage, &key) {
                Some(spec) => match spec.validate(&value) {
                    Ok(v) => {
                        out.insert(key, v);
                    }
                    Err(reason) => errors.push(FieldError::new(key, reason)),
                },
                None => errors.push(FieldError::new(key, format!("not a {} parameter", stage.long_name()))),
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(ServiceError::InvalidRequest(errors))
        }
    }

    /// Maps a parameter map keyed by name or key onto catalog keys.
    fn stage_param_fields(
        &self,
        stage: Stage,
        field: &str,
        params: &BTreeMap<String, Value>,
    ) -> Result<BTreeMap<String, Value>, ServiceError> {
        let mut out = BTreeMap::new();
        let mut errors = Vec::new();
        for (name, value) in params {
            let spec = self
                .catalog
                .stage_only(stage)
                .iter()
                .find(|p| p.key() == name)
                .or_else(|| self.catalog.stage_only(stage).iter().find(|p| &p.name == name));
            match spec {
                Some(spec) => {
                    if out.insert(spec.key().to_string(), value.clone()).is_some() {
                        errors.push(FieldError::new(format!("{field}.{name}"), "given twice"));
                    }
                }
                None => errors.push(FieldError::new(
                    format!("{field}.{name}"),
                    format!("not a declared {} parameter", stage.long_name()),
                )),
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(ServiceError::InvalidRequest(errors))
        }
    }

    fn check_design(&self, design: &str) -> Result<(), ServiceError> {
        let spec = self.catalog.by_key(Stage::Synthesis, "design").expect("design is shared");
        spec.validate(&Value::String(design.to_string())).map(|_| ()).map_err(|r| ServiceError::invalid("design", r))
    }

    fn next_syn_version(&self, design: &str) -> String {
        let dir = self.layout.root().join(design).join("synthesis");
        (1..).map(|n| format!("v{n}")).find(|v| !dir.join(v).exists()).expect("unbounded")
    }

    fn prepare_rtl(&self, design: &str, rtl_dir: Option<&str>) -> Result<PathBuf, ServiceError> {
        let path = match rtl_dir {
            Some(p) if Path::new(p).is_absolute() => PathBuf::from(p),
            Some(p) => self.layout.root().join(p),
            None => self.layout.rtl_dir(design),
        };
        if !path.is_dir() {
            if self.backend.kind != executor::BackendKind::Mock {
                return Err(ServiceError::invalid("rtl_dir", format!("{} does not exist", path.display())));
            }
            fs::create_dir_all(&path)?;
            fs::write(path.join(format!("{design}.v")), format!("// MOCK RTL\nmodule {design} ();\nendmodule\n"))?;
        }
        Ok(path)
    }

    pub fn run_synthesis(&self, req: &SynthRequest) -> Result<StageResponse, ServiceError> {
        self.check_design(&req.design)?;
        let mut fields = requests::flat_fields(req, &["syn_version", "rtl_dir", "top_name"]);
        if let Some(top) = &req.top_name {
            fields.insert("top_name".into(), Value::String(top.clone()));
        }
        if let Some(rtl) = &req.rtl_dir {
            fields.insert("rtl_dir".into(), Value::String(rtl.clone()));
        }
        let params = self.validate(Stage::Synthesis, fields)?;
        let syn_ver = match &req.syn_version {
            Some(v) => {
                check_label(v).map_err(|e| ServiceError::invalid("syn_version", e.to_string()))?;
                v.clone()
            }
            None => self.next_syn_version(&req.design),
        };
        let dir = self.layout.synthesis_dir(&req.design, &syn_ver);
        let _guard = self
            .locks
            .try_acquire(&dir)
            .ok_or_else(|| ServiceError::WorkspaceConflict(format!("synthesis version `{syn_ver}` is running")))?;
        if workspace::is_complete(&dir, Stage::Synthesis) {
            return Err(ServiceError::WorkspaceConflict(format!("synthesis version `{syn_ver}` already exists")));
        }
        let rtl = self.prepare_rtl(&req.design, req.rtl_dir.as_deref())?;
        let top = req.top_name.clone().unwrap_or_else(|| req.design.clone());
        self.run_job(Job {
            stage: Stage::Synthesis,
            design: req.design.clone(),
            dir,
            version: syn_ver.clone(),
            upstream_version: None,
            params,
            structural: vec![
                ("TOP_NAME", top),
                ("RTL_DIR", rtl.display().to_string()),
                ("SYN_VERSION", syn_ver),
            ],
        })
    }

    pub fn run_placement(&self, req: &PlacementRequest) -> Result<StageResponse, ServiceError> {
        self.check_design(&req.design)?;
        let mut fields = requests::flat_fields(req, &["syn_ver", "stage_params", "g_idx", "p_idx"]);
        fields.extend(self.stage_param_fields(Stage::Placement, "stage_params", &req.stage_params)?);
        let params = self.validate(Stage::Placement, fields)?;
        let impl_ver = make_impl_ver(&req.syn_ver, req.g_idx, req.p_idx).map_err(|e| match e {
            version::VersionError::NegativeIndex { name, .. } => ServiceError::invalid(name, e.to_string()),
            version::VersionError::IllegalLabel(_) => ServiceError::invalid("syn_ver", e.to_string()),
        })?;
        let syn_dir = self.layout.synthesis_dir(&req.design, &req.syn_ver);
        if !workspace::is_complete(&syn_dir, Stage::Synthesis) {
            return Err(ServiceError::MissingUpstream { stage: Stage::Synthesis, version: req.syn_ver.clone() });
        }
        let dir = self.layout.impl_dir(&req.design, &impl_ver);
        let _guard = self
            .locks
            .try_acquire(&dir)
            .ok_or_else(|| ServiceError::WorkspaceConflict(format!("implementation `{impl_ver}` is running")))?;
        if workspace::is_complete(&dir, Stage::Placement) {
            return Err(ServiceError::WorkspaceConflict(format!("placement `{impl_ver}` already exists")));
        }
        self.run_job(Job {
            stage: Stage::Placement,
            design: req.design.clone(),
            dir,
            version: impl_ver.clone(),
            upstream_version: Some(req.syn_ver.clone()),
            params,
            structural: vec![
                ("NETLIST", self.layout.netlist(&req.design, &req.syn_ver).display().to_string()),
                ("SDC_FILE", self.layout.constraints(&req.design, &req.syn_ver).display().to_string()),
                ("SYN_VERSION", req.syn_ver.clone()),
                ("IMPL_VERSION", impl_ver),
            ],
        })
    }

    /// Shared path of CTS and route: both extend an existing implementation.
    fn run_in_impl(
        &self,
        stage: Stage,
        design: &str,
        impl_ver: &str,
        params: BTreeMap<String, Value>,
    ) -> Result<(StageResponse, PathBuf), ServiceError> {
        check_label(impl_ver).map_err(|e| ServiceError::invalid("impl_ver", e.to_string()))?;
        let upstream = stage.upstream().expect("cts and route have an upstream");
        let dir = self.layout.impl_dir(design, impl_ver);
        let _guard = self
            .locks
            .try_acquire(&dir)
            .ok_or_else(|| ServiceError::WorkspaceConflict(format!("implementation `{impl_ver}` is running")))?;
        let missing = || ServiceError::MissingUpstream { stage: upstream, version: impl_ver.to_string() };
        if !workspace::is_complete(&dir, upstream) {
            return Err(missing());
        }
        let restore = executor::locate_checkpoint(&dir, upstream).ok_or_else(missing)?;
        let resp = self.run_job(Job {
            stage,
            design: design.to_string(),
            dir: dir.clone(),
            version: impl_ver.to_string(),
            upstream_version: Some(impl_ver.to_string()),
            params,
            structural: vec![("IMPL_VERSION", impl_ver.to_string()), ("RESTORE_FROM", restore)],
        })?;
        Ok((resp, dir))
    }

    pub fn run_cts(&self, req: &CtsRequest) -> Result<StageResponse, ServiceError> {
        self.check_design(&req.design)?;
        let params = self.validate(Stage::Cts, requests::flat_fields(req, &["impl_ver"]))?;
        let resolved = |key: &str| -> f64 {
            params
                .get(key)
                .or(self.catalog.by_key(Stage::Cts, key).and_then(|s| s.default.as_ref()))
                .and_then(Value::as_f64)
                .unwrap_or(0.0)
        };
        let constraints = CtsConstraints {
            objective: "minimize clock skew subject to transition_time <= max_transition".into(),
            target_skew_ns: resolved("target_skew"),
            max_transition_ns: resolved("max_transition"),
        };
        let (mut resp, _) = self.run_in_impl(Stage::Cts, &req.design, &req.impl_ver, params)?;
        resp.constraints = Some(constraints);
        Ok(resp)
    }

    pub fn run_route(&self, req: &RouteRequest) -> Result<StageResponse, ServiceError> {
        self.check_design(&req.design)?;
        let mut fields = requests::flat_fields(req, &["impl_ver", "route_params", "collect_artifacts"]);
        fields.extend(self.stage_param_fields(Stage::Route, "route_params", &req.route_params)?);
        let params = self.validate(Stage::Route, fields)?;
        let (mut resp, dir) = self.run_in_impl(Stage::Route, &req.design, &req.impl_ver, params)?;
        if req.collect_artifacts && resp.status == Status::Success {
            let manifest = ArtifactManifest::deliverables(&req.design, &req.impl_ver);
            let path = executor::collect_artifacts(&dir, &manifest)?;
            resp.artifacts = path.file_name().map(|n| n.to_string_lossy().into_owned());
        }
        Ok(resp)
    }

    /// Dispatches a JSON request body to the stage's service.
    pub fn run_json(&self, stage: Stage, body: Value) -> Result<StageResponse, ServiceError> {
        let bad = |e: serde_json::Error| ServiceError::invalid("body", e.to_string());
        match stage {
            Stage::Synthesis => self.run_synthesis(&serde_json::from_value(body).map_err(bad)?),
            Stage::Placement => self.run_placement(&serde_json::from_value(body).map_err(bad)?),
            Stage::Cts => self.run_cts(&serde_json::from_value(body).map_err(bad)?),
            Stage::Route => self.run_route(&serde_json::from_value(body).map_err(bad)?),
        }
    }

    fn run_job(&self, job: Job) -> Result<StageResponse, ServiceError> {
        workspace::prepare(&job.dir)?;
        let mut binding = ParamBinding::new();
        binding.set("DESIGN", job.design.clone()).set("WORK_DIR", job.dir.display().to_string());
        if let Some(lib) = &self.lib_root {
            binding.set("LIB_ROOT", lib.clone());
        }
        for (name, value) in &job.structural {
            binding.set(*name, value.clone());
        }
        for spec in self.catalog.params(job.stage) {
            let supplied = job.params.get(spec.key());
            if let (Some(var), Some(v)) = (&spec.var, supplied) {
                binding.set(var.clone(), format_value(v));
            }
            if spec.env {
                if let Some(v) = supplied.or(spec.default.as_ref()) {
                    binding.export(spec.key(), format_value(v));
                }
            }
        }
        let script = render(self.templates.get(job.stage), &binding)?;
        let result = executor::execute(&script, &self.backend, &job.dir)?;
        let ok = result.exit_status == RunStatus::Ok;
        let label = result
            .checkpoint
            .clone()
            .or_else(|| script.value("CHECKPOINT").map(str::to_string))
            .unwrap_or_else(|| job.stage.tool_name().to_string());
        workspace::write_record(
            &job.dir,
            &ManifestRecord {
                stage: job.stage,
                version: job.version.clone(),
                label: label.clone(),
                seq: workspace::next_seq(&job.dir, job.stage),
                timestamp_ms: now_ms(),
                complete: ok,
                reports: result.produced_reports.clone(),
            },
        )?;
        Ok(StageResponse {
            status: if ok { Status::Success } else { Status::Error },
            stage: job.stage,
            version: job.version,
            upstream_version: job.upstream_version,
            rendered_tcl: script.text,
            report_paths: result.produced_reports,
            log_excerpt: result.stdout_excerpt,
            params: job.params,
            provenance: script.provenance,
            checkpoint: ok.then_some(label),
            artifacts: None,
            constraints: None,
        })
    }
}
