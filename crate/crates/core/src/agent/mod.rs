// SPDX-License-Identifier: Apache-2.0

//! Natural-language front end: prompt to [`ToolPlan`] to stage service
//! calls.

pub mod extract;
pub mod session;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::services::{ServiceError, StageResponse, StageServices, Status};
use crate::stage::Stage;
use crate::template::Origin;
use crate::version::make_impl_ver;
use crate::workspace::{self, WorkspaceLayout};

pub use extract::{
    extractor_for, extractor_from_env, Assignment, Extraction, FallbackExtractor, ModelClient, ParameterExtractor,
    RuleEngine, Unresolved, VersionRefs,
};
pub use crate::llm::ModelClientConfig;
pub use session::{DesignVersions, SessionContext, SessionStore, SharedSession};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("model client unavailable: {0}")]
    ModelClientUnavailable(String),
    #[error("no flow stage named or implied by the request")]
    NoStageDetected,
    #[error("plan has {} conflict(s): {}", .0.len(), .0.iter().map(|c| c.detail.as_str()).collect::<Vec<_>>().join("; "))]
    Conflicts(Vec<Conflict>),
    #[error("stage {stage} failed", stage = .0.results.last().map_or("?", |r| r.tool.tool_name()))]
    StageFailed(Box<AgentResponse>),
    #[error("unknown session `{0}`")]
    SessionUnknown(String),
    #[error("session persistence: {0}")]
    Persist(#[from] std::io::Error),
}

impl AgentError {
    pub fn code(&self) -> &'static str {
        match self {
            AgentError::EmptyPrompt => "empty_prompt",
            AgentError::ModelClientUnavailable(_) => "model_client_unavailable",
            AgentError::NoStageDetected => "no_stage_detected",
            AgentError::Conflicts(_) => "conflicts",
            AgentError::StageFailed(_) => "stage_failed",
            AgentError::SessionUnknown(_) => "session_unknown",
            AgentError::Persist(_) => "persistence_failure",
        }
    }
}

/// Ordered stage list with the parameters routed to each stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolPlan {
    pub stages: Vec<Stage>,
    /// Stage parameters by name. Every planned stage has an entry.
    pub per_stage_params: BTreeMap<Stage, BTreeMap<String, Value>>,
    /// Parameters every stage receives (design, tech node).
    pub shared: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub unresolved: Vec<Unresolved>,
    /// Every assignment read from the prompt, duplicates included.
    pub assignments: Vec<Assignment>,
    #[serde(default)]
    pub versions: VersionRefs,
    #[serde(default)]
    pub collect_artifacts: bool,
}

impl ToolPlan {
    /// Short form used in result tables, e.g. `S+P+C`.
    pub fn combination(&self) -> String {
        self.stages
            .iter()
            .map(|s| match s {
                Stage::Synthesis => "S",
                Stage::Placement => "P",
                Stage::Cts => "C",
                Stage::Route => "R",
            })
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn design(&self) -> Option<&str> {
        self.shared.get("design").and_then(Value::as_str)
    }
}

/// Orders the extracted stages canonically and routes parameters to them.
/// Stages between the first and last named one are included, since each
/// consumes the previous one's result.
pub fn decompose(extraction: Extraction, session_id: Option<String>) -> Result<ToolPlan, AgentError> {
    let named: BTreeSet<Stage> =
        extraction.stage_mentions.iter().copied().chain(extraction.assignments.iter().filter_map(|a| a.stage)).collect();
    let (Some(first), Some(last)) = (named.first(), named.last()) else {
        return Err(AgentError::NoStageDetected);
    };
    let stages: Vec<Stage> = Stage::ALL[first.ordinal()..=last.ordinal()].to_vec();
    let mut per_stage_params: BTreeMap<Stage, BTreeMap<String, Value>> = stages.iter().map(|s| (*s, BTreeMap::new())).collect();
    let mut shared = BTreeMap::new();
    for a in &extraction.assignments {
        let map = match a.stage {
            Some(s) => per_stage_params.get_mut(&s).expect("assigned stages are planned"),
            None => &mut shared,
        };
        map.entry(a.param.clone()).or_insert_with(|| a.value.clone());
    }
    Ok(ToolPlan {
        stages,
        per_stage_params,
        shared,
        session_id,
        unresolved: extraction.unresolved,
        assignments: extraction.assignments,
        versions: extraction.versions,
        collect_artifacts: extraction.collect_artifacts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    /// One parameter given two different values.
    DuplicateValue,
    /// Value outside the parameter's domain.
    OutOfRange,
    /// First stage of the plan has no upstream result to start from.
    MissingDependency,
    /// A required parameter is absent from the plan and the session.
    MissingParameter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub kind: ConflictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub parameter: String,
    pub detail: String,
}

/// Upstream versions the plan would start from, from the plan itself or the
/// session.
fn start_versions(plan: &ToolPlan, design: Option<&str>, session: Option<&SessionContext>) -> DesignVersions {
    let remembered = match (session, design) {
        (Some(s), Some(d)) => s.design_versions(d),
        _ => DesignVersions::default(),
    };
    DesignVersions {
        syn_ver: plan.versions.syn_ver.clone().or(remembered.syn_ver),
        impl_ver: plan.versions.impl_ver.clone().or(remembered.impl_ver),
    }
}

fn plan_design<'a>(plan: &'a ToolPlan, session: Option<&'a SessionContext>) -> Option<&'a str> {
    plan.design().or_else(|| session.and_then(|s| s.last_design.as_deref()))
}

/// Everything that would stop the plan from running. An empty list means
/// the plan is executable.
pub fn detect_conflicts(
    plan: &ToolPlan,
    catalog: &Catalog,
    session: Option<&SessionContext>,
    layout: &WorkspaceLayout,
) -> Vec<Conflict> {
    let mut out = Vec::new();
    let scope = |stage: Option<Stage>| stage.map_or("shared".to_string(), |s| s.tool_name().to_string());

    let mut seen: BTreeMap<(Option<Stage>, &str), Vec<&Value>> = BTreeMap::new();
    for a in &plan.assignments {
        let values = seen.entry((a.stage, a.param.as_str())).or_default();
        let same = |v: &Value| v == &a.value || (v.as_f64().is_some() && v.as_f64() == a.value.as_f64());
        if !values.iter().any(|v| same(v)) {
            values.push(&a.value);
        }
    }
    for ((stage, param), values) in &seen {
        if values.len() > 1 {
            let listed: Vec<String> = values.iter().map(|v| crate::catalog::format_value(v)).collect();
            out.push(Conflict {
                kind: ConflictKind::DuplicateValue,
                stage: *stage,
                parameter: param.to_string(),
                detail: format!("{}.{param} given as {}", scope(*stage), listed.join(" and ")),
            });
        }
    }

    let mut check = |stage: Option<Stage>, name: &str, value: &Value| {
        let spec = match stage {
            Some(s) => catalog.stage_only(s).iter().find(|p| p.name == name),
            None => catalog.shared.iter().find(|p| p.name == name),
        };
        let problem = match spec {
            Some(spec) => spec.validate(value).err(),
            None => Some("not a catalog parameter".to_string()),
        };
        if let Some(reason) = problem {
            out.push(Conflict {
                kind: ConflictKind::OutOfRange,
                stage,
                parameter: name.to_string(),
                detail: format!("{}.{name}: {reason}", scope(stage)),
            });
        }
    };
    for (name, value) in &plan.shared {
        check(None, name, value);
    }
    for (stage, params) in &plan.per_stage_params {
        for (name, value) in params {
            check(Some(*stage), name, value);
        }
    }

    let design = plan_design(plan, session);
    if design.is_none() {
        out.push(Conflict {
            kind: ConflictKind::MissingParameter,
            stage: None,
            parameter: "design".into(),
            detail: "no design named in the request or the session".into(),
        });
    }
    let Some(first) = plan.stages.first().copied() else { return out };
    let versions = start_versions(plan, design, session);
    let missing = |parameter: &str, detail: String| Conflict {
        kind: ConflictKind::MissingDependency,
        stage: Some(first),
        parameter: parameter.into(),
        detail,
    };
    match (first, design) {
        (Stage::Synthesis, _) | (_, None) => {}
        (Stage::Placement, Some(d)) => match &versions.syn_ver {
            None => out.push(missing("syn_ver", "placement needs a synthesis version and none is known".into())),
            Some(v) if !workspace::is_complete(&layout.synthesis_dir(d, v), Stage::Synthesis) => {
                out.push(missing("syn_ver", format!("synthesis version `{v}` of `{d}` does not exist")))
            }
            Some(_) => {}
        },
        (stage, Some(d)) => {
            let upstream = stage.upstream().expect("later stages have an upstream");
            match &versions.impl_ver {
                None => out.push(missing(
                    "impl_ver",
                    format!("{} needs an implementation version and none is known", stage.long_name()),
                )),
                Some(v) if !workspace::is_complete(&layout.impl_dir(d, v), upstream) => out.push(missing(
                    "impl_ver",
                    format!("implementation `{v}` of `{d}` has no completed {}", upstream.long_name()),
                )),
                Some(_) => {}
            }
        }
    }
    out
}

/// One executed stage in an [`AgentResponse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub tool: Stage,
    pub status: Status,
    pub params: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub tcl_script: String,
    /// Report file names.
    pub reports: Vec<String>,
    /// Placeholder origins, user-supplied or default.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, Origin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub status: Status,
    pub session_id: String,
    pub tools_used: Vec<Stage>,
    pub results: Vec<StageResult>,
    #[serde(default)]
    pub unresolved: Vec<Unresolved>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn file_names(paths: &[String]) -> Vec<String> {
    paths
        .iter()
        .map(|p| Path::new(p).file_name().map_or_else(|| p.clone(), |n| n.to_string_lossy().into_owned()))
        .collect()
}

/// Plans and runs prompts against a set of stage services.
pub struct Orchestrator {
    services: StageServices,
    sessions: SessionStore,
    extractor: Box<dyn ParameterExtractor>,
}

impl Orchestrator {
    /// Orchestrator using the deterministic rule engine.
    pub fn new(services: StageServices) -> Self {
        Self::with_extractor(services, Box::new(RuleEngine::default()))
    }

    pub fn with_extractor(services: StageServices, extractor: Box<dyn ParameterExtractor>) -> Self {
        Self { services, sessions: SessionStore::new(), extractor }
    }

    pub fn with_sessions(mut self, sessions: SessionStore) -> Self {
        self.sessions = sessions;
        self
    }

    pub fn services(&self) -> &StageServices {
        &self.services
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn extractor_name(&self) -> &'static str {
        self.extractor.name()
    }

    pub fn plan(&self, prompt: &str, session_id: Option<String>) -> Result<ToolPlan, AgentError> {
        decompose(self.extractor.extract(prompt)?, session_id)
    }

    pub fn conflicts(&self, plan: &ToolPlan, session: Option<&SessionContext>) -> Vec<Conflict> {
        detect_conflicts(plan, self.services.catalog(), session, self.services.layout())
    }

    /// Plans `prompt` and runs it in the given session, or in a new one.
    pub fn run(&self, prompt: &str, session_id: Option<&str>) -> Result<AgentResponse, AgentError> {
        let id = match session_id {
            Some(id) => {
                self.sessions.get(id).ok_or_else(|| AgentError::SessionUnknown(id.to_string()))?;
                id.to_string()
            }
            None => self.sessions.create().0,
        };
        let plan = self.plan(prompt, Some(id))?;
        self.execute_plan(&plan)
    }

    /// Runs the plan's stages in order, threading version labels from one
    /// stage to the next and stopping at the first failure.
    pub fn execute_plan(&self, plan: &ToolPlan) -> Result<AgentResponse, AgentError> {
        let id = plan.session_id.clone().ok_or_else(|| AgentError::SessionUnknown(String::new()))?;
        let session = self.sessions.get(&id).ok_or_else(|| AgentError::SessionUnknown(id.clone()))?;
        let mut ctx = session.lock().expect("session poisoned");
        let conflicts = self.conflicts(plan, Some(&ctx));
        if !conflicts.is_empty() {
            return Err(AgentError::Conflicts(conflicts));
        }
        let design = plan_design(plan, Some(&ctx)).expect("checked by detect_conflicts").to_string();
        let tech_node = plan
            .shared
            .get("tech_node")
            .and_then(Value::as_str)
            .map(str::to_string)
            .or_else(|| ctx.tech_node.clone());
        let mut versions = start_versions(plan, Some(&design), Some(&ctx));
        let mut response = AgentResponse {
            status: Status::Success,
            session_id: id.clone(),
            tools_used: Vec::new(),
            results: Vec::new(),
            unresolved: plan.unresolved.clone(),
            error: None,
        };
        for stage in &plan.stages {
            let stage = *stage;
            let params = &plan.per_stage_params[&stage];
            let outcome = self.run_stage(stage, &design, tech_node.as_deref(), params, &versions, plan.collect_artifacts);
            let mut shown: BTreeMap<String, Value> = BTreeMap::new();
            shown.insert("design".into(), Value::String(design.clone()));
            if let Some(t) = &tech_node {
                shown.insert("tech_node".into(), Value::String(t.clone()));
            }
            shown.extend(params.iter().map(|(k, v)| (k.clone(), v.clone())));
            response.tools_used.push(stage);
            let failed = match outcome {
                Ok(resp) => {
                    let ok = resp.status == Status::Success;
                    if ok {
                        match stage {
                            Stage::Synthesis => {
                                versions.syn_ver = Some(resp.version.clone());
                                versions.impl_ver = None;
                            }
                            _ => versions.impl_ver = Some(resp.version.clone()),
                        }
                    }
                    response.results.push(StageResult {
                        tool: stage,
                        status: resp.status,
                        params: shown,
                        version: Some(resp.version.clone()),
                        tcl_script: resp.rendered_tcl,
                        reports: file_names(&resp.report_paths),
                        provenance: resp.provenance,
                        artifacts: resp.artifacts,
                        error: (!ok).then(|| format!("{} run failed: {}", stage.long_name(), resp.log_excerpt)),
                    });
                    !ok
                }
                Err(e) => {
                    response.results.push(StageResult {
                        tool: stage,
                        status: Status::Error,
                        params: shown,
                        version: None,
                        tcl_script: String::new(),
                        reports: Vec::new(),
                        provenance: BTreeMap::new(),
                        artifacts: None,
                        error: Some(format!("{}: {e}", e.code())),
                    });
                    true
                }
            };
            if failed {
                response.status = Status::Error;
                response.error = response.results.last().and_then(|r| r.error.clone());
                break;
            }
        }
        ctx.plans.push(plan.clone());
        ctx.last_design = Some(design.clone());
        if tech_node.is_some() {
            ctx.tech_node = tech_node;
        }
        ctx.versions.insert(design, versions);
        self.sessions.save(&ctx)?;
        if response.status == Status::Error {
            return Err(AgentError::StageFailed(Box::new(response)));
        }
        Ok(response)
    }

    fn run_stage(
        &self,
        stage: Stage,
        design: &str,
        tech_node: Option<&str>,
        params: &BTreeMap<String, Value>,
        versions: &DesignVersions,
        collect_artifacts: bool,
    ) -> Result<StageResponse, ServiceError> {
        let catalog = self.services.catalog();
        let by_key = || -> serde_json::Map<String, Value> {
            params
                .iter()
                .map(|(name, v)| {
                    let key = catalog.by_name(stage, name).map_or(name.as_str(), |s| s.key());
                    (key.to_string(), v.clone())
                })
                .collect()
        };
        let mut body = match stage {
            Stage::Synthesis => Value::Object(by_key()),
            Stage::Placement => {
                let syn_ver = versions.syn_ver.clone().unwrap_or_default();
                let p_idx = (0..)
                    .find(|p| {
                        make_impl_ver(&syn_ver, 0, *p)
                            .map(|v| !self.services.layout().impl_dir(design, &v).exists())
                            .unwrap_or(true)
                    })
                    .expect("unbounded");
                json!({"syn_ver": syn_ver, "stage_params": params, "g_idx": 0, "p_idx": p_idx})
            }
            Stage::Cts => {
                let mut m = by_key();
                m.insert("impl_ver".into(), json!(versions.impl_ver.clone().unwrap_or_default()));
                Value::Object(m)
            }
            Stage::Route => json!({
                "impl_ver": versions.impl_ver.clone().unwrap_or_default(),
                "route_params": params,
                "collect_artifacts": collect_artifacts,
            }),
        };
        body["design"] = json!(design);
        if let Some(t) = tech_node {
            body["tech_node"] = json!(t);
        }
        self.services.run_json(stage, body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::ExecutionBackend;
    use crate::services::ServiceConfig;
    use proptest::prelude::*;

    const EXAMPLE: &str = "Synthesize design \"b14\" on FreePDK45 with fanout limit \n4.74. Then run placement with high level of effort for \ntiming driven global placer and medium wire length \noptimization effort level.";

    fn orchestrator() -> (tempfile::TempDir, Orchestrator) {
        let dir = tempfile::tempdir().unwrap();
        let o = Orchestrator::new(StageServices::new(ServiceConfig::mock(dir.path())));
        (dir, o)
    }

    fn plan(prompt: &str) -> ToolPlan {
        decompose(RuleEngine::default().extract(prompt).unwrap(), Some("t".into())).unwrap()
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(plan(EXAMPLE).stages, [Stage::Synthesis, Stage::Placement]);
        assert_eq!(plan("run clock tree synthesis on design top with target skew 0.04 ns").stages, [Stage::Cts]);
        assert_eq!(
            plan("synthesize, place, run cts and route design top").stages,
            [Stage::Synthesis, Stage::Placement, Stage::Cts, Stage::Route]
        );
        assert!(matches!(
            decompose(RuleEngine::default().extract("hello there").unwrap(), None),
            Err(AgentError::NoStageDetected)
        ));
    }

    #[test]
    fn gaps_are_filled() {
        assert_eq!(plan("synthesize design top and then route it").stages, Stage::ALL);
    }

    #[test]
    fn conflicts() {
        let layout = WorkspaceLayout::new("/nonexistent");
        let cat = Catalog::builtin();
        let p = plan("synthesize design top with fanout limit 4 and max fanout 8");
        let c = detect_conflicts(&p, cat, None, &layout);
        assert_eq!(c.len(), 1, "{c:?}");
        assert_eq!(c[0].kind, ConflictKind::DuplicateValue);

        let p = plan("run cts for design top on implementation version v1__g0__p0 with cts cell density 1.5");
        let c = detect_conflicts(&p, cat, None, &layout);
        assert!(c.iter().any(|c| c.kind == ConflictKind::OutOfRange && c.parameter == "cts_cell_density"));

        let p = plan("place design top with core utilization 0.6");
        let c = detect_conflicts(&p, cat, None, &layout);
        assert_eq!(c.iter().map(|c| c.kind).collect::<Vec<_>>(), [ConflictKind::MissingDependency]);
    }

    #[test]
    fn dependency_conflict_matches_service_replay() {
        let (_d, o) = orchestrator();
        let p = plan("place design top with core utilization 0.6");
        assert!(o.conflicts(&p, None).iter().any(|c| c.kind == ConflictKind::MissingDependency));
        let replay = o.services().run_json(Stage::Placement, json!({"design": "top", "syn_ver": "v1"}));
        assert!(matches!(replay, Err(ServiceError::MissingUpstream { .. })));
    }

    #[test]
    fn worked_example_runs() {
        let (_d, o) = orchestrator();
        let r = o.run(EXAMPLE, None).unwrap();
        assert_eq!(r.status, Status::Success);
        assert_eq!(r.tools_used, [Stage::Synthesis, Stage::Placement]);
        assert_eq!(r.results.len(), 2);
        assert_eq!(r.results[0].params["fanout_limit"], json!(4.74));
        assert_eq!(r.results[1].params["global_timing_effort"], json!("high"));
        assert_eq!(r.results[1].params["design"], json!("b14"));
        assert!(r.results[0].tcl_script.contains("set MAX_FANOUT 4.74"));
        assert!(r.results[1].tcl_script.contains("set PLACE_GLOBAL_TIMING_EFFORT \"high\""));
        assert!(r.results.iter().all(|x| !x.reports.is_empty()));
    }

    #[test]
    fn synthesis_failure_stops_plan() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ServiceConfig::mock(dir.path());
        cfg.backend = ExecutionBackend::failing([Stage::Synthesis]);
        let o = Orchestrator::new(StageServices::new(cfg));
        match o.run(EXAMPLE, None) {
            Err(AgentError::StageFailed(resp)) => {
                assert_eq!(resp.results.len(), 1);
                assert_eq!(resp.tools_used, [Stage::Synthesis]);
                assert_eq!(resp.status, Status::Error);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn session_reuses_syn_ver() {
        let (_d, o) = orchestrator();
        let first = o.run(EXAMPLE, None).unwrap();
        let sid = first.session_id.clone();
        let again = o.run("place it again with low congestion effort", Some(&sid)).unwrap();
        assert_eq!(again.tools_used, [Stage::Placement]);
        let netlist = o.services().layout().netlist("b14", "v1");
        assert!(again.results[0].tcl_script.contains(&netlist.display().to_string()));
        assert_eq!(again.results[0].version.as_deref(), Some("v1__g0__p1"));
        assert!(matches!(o.run(EXAMPLE, Some("missing")), Err(AgentError::SessionUnknown(_))));
    }

    proptest! {
        #[test]
        fn order_invariance_and_conservation(order in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
            let clauses = [
                "synthesize with map effort high",
                "place with core utilization 0.6",
                "run cts with target skew 0.05 ns",
                "route with top routing layer 8",
            ];
            let prompt = format!("For design top: {}.", order.iter().map(|i| clauses[*i]).collect::<Vec<_>>().join(". "));
            let ex = RuleEngine::default().extract(&prompt).unwrap();
            let n = ex.assignments.len();
            let unresolved = ex.unresolved.len();
            let p = decompose(ex, None).unwrap();
            prop_assert_eq!(&p.stages, &Stage::ALL.to_vec());
            prop_assert_eq!(unresolved, 0);
            let placed: usize = p.per_stage_params.values().map(|m| m.len()).sum::<usize>() + p.shared.len();
            prop_assert_eq!(placed, n);
        }
    }
}
