// SPDX-License-Identifier: Apache-2.0

//! `edaflow`: serve the flow services, run requests, score scripts and
//! generate benchmarks.

mod config;
mod error;
mod server;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edaflow::agent::{extractor_for, AgentError, AgentResponse, Orchestrator, SessionStore};
use edaflow::benchgen::{self, ParamSchema, PromptEngine, SampleOptions};
use edaflow::executor::ExecutionBackend;
use edaflow::services::{ServiceConfig, StageServices, Status};
use edaflow::codebleu::StageSource;
use edaflow::{CodeBleuReport, Stage};
use serde_json::{json, Value};

use config::CliConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "edaflow", version, about = "RTL-to-GDSII flow services, agent and script evaluation")]
struct Cli {
    /// Configuration file (JSON).
    #[arg(long, global = true, env = "EDAFLOW_CONFIG")]
    config: Option<PathBuf>,
    /// Workspace root; overrides the configuration file.
    #[arg(long, global = true, env = "EDAFLOW_ROOT")]
    root: Option<PathBuf>,
    /// Execution backend file; overrides the configuration file.
    #[arg(long, global = true, env = "EDAFLOW_BACKEND")]
    backend: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Start the four stage services and the agent endpoint.
    Serve(ServeArgs),
    /// Plan and execute a natural-language request.
    Run(RunArgs),
    /// Score a candidate script against a reference.
    #[command(visible_alias = "score")]
    Evaluate(EvaluateArgs),
    /// Generate a benchmark dataset.
    Benchgen(BenchgenArgs),
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<String>,
    /// Port overrides as NAME=PORT (agent, synth, placement, cts, route).
    #[arg(long = "port", value_name = "NAME=PORT")]
    ports: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Request text; `-` reads it from stdin.
    prompt: String,
    /// Session to continue, created when new.
    #[arg(long)]
    session: Option<String>,
    /// Agent endpoint of a running `serve`, e.g. http://127.0.0.1:8000.
    #[arg(long)]
    remote: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    candidate: PathBuf,
    /// Flow stage; detected from the reference when omitted.
    #[arg(long)]
    stage: Option<Stage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Hermetic,
    Model,
}

#[derive(Debug, Args)]
struct BenchgenArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Hermetic)]
    engine: EngineArg,
    /// Parameter schema file; the bundled one when omitted.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Include contiguous multi-stage cases.
    #[arg(long)]
    multi_stage: bool,
}

fn load_config(cli: &Cli) -> Result<CliConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(r) = &cli.root {
        cfg.workspace_root = r.clone();
    }
    if let Some(b) = &cli.backend {
        cfg.backend = Some(b.clone());
    }
    Ok(cfg)
}

fn build_orchestrator(cfg: &CliConfig) -> Result<Orchestrator, CliError> {
    cfg.prepare_root()?;
    let backend = match &cfg.backend {
        Some(p) => ExecutionBackend::load(p).map_err(|e| CliError::config(e.to_string()))?,
        None => ExecutionBackend::mock(),
    };
    let services = StageServices::new(ServiceConfig { root: cfg.workspace_root.clone(), backend, lib_root: None });
    let sessions = SessionStore::persistent(cfg.sessions_dir()).map_err(|e| CliError::config(e.to_string()))?;
    Ok(Orchestrator::with_extractor(services, extractor_for(cfg.model_env.client_config())).with_sessions(sessions))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn serve(cli: &Cli, args: &ServeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(cli)?;
    if let Some(h) = &args.host {
        cfg.host = h.clone();
    }
    for spec in &args.ports {
        let (name, port) = spec.split_once('=').ok_or_else(|| CliError::config(format!("--port expects NAME=PORT, got `{spec}`")))?;
        let port: u16 = port.parse().map_err(|_| CliError::config(format!("bad port in `{spec}`")))?;
        let slot = match name {
            "agent" => &mut cfg.ports.agent,
            "synth" => &mut cfg.ports.synth,
            "placement" => &mut cfg.ports.placement,
            "cts" => &mut cfg.ports.cts,
            "route" => &mut cfg.ports.route,
            other => return Err(CliError::config(format!("unknown service `{other}`"))),
        };
        *slot = port;
    }
    cfg.validate_ports()?;
    let orchestrator = Arc::new(build_orchestrator(&cfg)?);
    let services = orchestrator.services().clone();
    let mut routers = vec![("agent", cfg.ports.agent, server::agent_router(orchestrator))];
    for stage in Stage::ALL {
        routers.push((stage.tool_name(), cfg.ports.stage(stage), server::stage_router(services.clone(), stage)));
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::internal("runtime", e.to_string()))?;
    runtime.block_on(server::serve(&cfg.host, routers))
}

fn read_prompt(arg: &str) -> Result<String, CliError> {
    if arg != "-" {
        return Ok(arg.to_string());
    }
    let mut s = String::new();
    io::stdin().read_to_string(&mut s).map_err(|e| CliError::user("io_failure", e.to_string()))?;
    Ok(s)
}

fn run_remote(url: &str, prompt: &str, session: Option<&str>) -> Result<AgentResponse, CliError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(3600))
        .build()
        .map_err(|e| CliError::internal("http", e.to_string()))?;
    let endpoint = format!("{}/agent/run", url.trim_end_matches('/'));
    let resp = client
        .post(&endpoint)
        .json(&json!({"prompt": prompt, "session_id": session}))
        .send()
        .map_err(|e| CliError::user("unreachable", format!("{endpoint}: {e}")))?;
    let status = resp.status();
    let body: Value = resp.json().map_err(|e| CliError::internal("http", e.to_string()))?;
    if let Ok(r) = serde_json::from_value::<AgentResponse>(body.clone()) {
        return match r.status {
            Status::Success => Ok(r),
            Status::Error => Err(AgentError::StageFailed(Box::new(r)).into()),
        };
    }
    let code = body["error"]["code"].as_str().unwrap_or("unknown");
    let message = format!("{code}: {}", body["error"]["message"].as_str().unwrap_or("request failed"));
    Err(if status.is_client_error() { CliError::user("remote_error", message) } else { CliError::internal("remote_error", message) })
}

fn print_agent_response(r: &AgentResponse, as_json: bool) {
    if as_json {
        print_json(&serde_json::to_value(r).expect("response serializes"));
        return;
    }
    let status = if r.status == Status::Success { "success" } else { "error" };
    println!("status: {status}");
    println!("session: {}", r.session_id);
    for res in &r.results {
        let version = res.version.as_deref().unwrap_or("-");
        println!("{:<10} {version:<20} {} report(s)", res.tool.tool_name(), res.reports.len());
        if let Some(e) = &res.error {
            println!("  error: {e}");
        }
    }
    for u in &r.unresolved {
        println!("unresolved: {} ({})", u.parameter, u.reason);
    }
}

fn run(cli: &Cli, args: &RunArgs) -> Result<(), CliError> {
    let prompt = read_prompt(&args.prompt)?;
    let response = match &args.remote {
        Some(url) => run_remote(url, &prompt, args.session.as_deref()),
        None => {
            let cfg = load_config(cli)?;
            let o = build_orchestrator(&cfg)?;
            if let Some(id) = &args.session {
                o.sessions().open(id).ok_or_else(|| CliError::user("session_unknown", format!("illegal session id `{id}`")))?;
            }
            o.run(&prompt, args.session.as_deref()).map_err(CliError::from)
        }
    };
    match response {
        Ok(r) => {
            print_agent_response(&r, cli.json);
            Ok(())
        }
        Err(CliError::User { code: "stage_failed", detail: Some(d), message }) => {
            if let Ok(r) = serde_json::from_value::<AgentResponse>(d) {
                print_agent_response(&r, cli.json);
            }
            Err(CliError::user("stage_failed", message))
        }
        Err(e) => Err(e),
    }
}

fn read_script(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::user("io_failure", format!("{}: {e}", path.display())))
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<(), CliError> {
    let reference = read_script(&args.reference)?;
    let candidate = read_script(&args.candidate)?;
    let report: CodeBleuReport = edaflow::codebleu::evaluate(&reference, &candidate, args.stage);
    if cli.json {
        print_json(&serde_json::to_value(&report).expect("report serializes"));
        return Ok(());
    }
    let info = &report.stage_detected;
    let source = if info.source == StageSource::Argument { "given" } else { "detected" };
    println!("stage:          {} ({source}, confidence {:.3})", info.stage.tool_name(), info.confidence);
    println!("ngram:          {:.3}", report.ngram);
    println!("weighted ngram: {:.3}", report.weighted_ngram);
    println!("syntax:         {:.3}", report.syntax);
    println!("dataflow:       {:.3}", report.dataflow);
    println!("codebleu:       {:.3}", report.total);
    for d in report.flags.reference_diagnostics.iter().chain(&report.flags.candidate_diagnostics) {
        println!("warning: {d}");
    }
    Ok(())
}

fn benchgen_cmd(cli: &Cli, args: &BenchgenArgs) -> Result<(), CliError> {
    let schema = match &args.schema {
        Some(p) => ParamSchema::load(p).map_err(|e| CliError::config(e.to_string()))?,
        None => ParamSchema::builtin().clone(),
    };
    let engine = match args.engine {
        EngineArg::Hermetic => PromptEngine::Hermetic,
        EngineArg::Model => {
            let cfg = load_config(cli)?;
            let client = cfg.model_env.client_config().ok_or_else(|| {
                CliError::user(
                    "model_client_unavailable",
                    format!("set {} and {} to use the model engine", cfg.model_env.url, cfg.model_env.model),
                )
            })?;
            PromptEngine::Model(client)
        }
    };
    let options = SampleOptions { multi_stage: args.multi_stage };
    let cases = benchgen::generate_dataset(args.n, &schema, args.seed, &engine, options).map_err(|e| match e {
        benchgen::BenchError::ModelClientUnavailable(m) => CliError::internal("model_client_unavailable", m),
        benchgen::BenchError::Io(e) => CliError::internal("io_failure", e.to_string()),
        other => CliError::user("benchgen_failed", other.to_string()),
    })?;
    let file = fs::File::create(&args.out).map_err(|e| CliError::user("io_failure", format!("{}: {e}", args.out.display())))?;
    let mut w = BufWriter::new(file);
    benchgen::write_dataset(&cases, &mut w)
        .and_then(|_| w.flush().map_err(Into::into))
        .map_err(|e| CliError::internal("io_failure", e.to_string()))?;
    let mut designs: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &cases {
        *designs.entry(c.design.as_str()).or_default() += 1;
    }
    if cli.json {
        print_json(&json!({"status": "success", "n": cases.len(), "out": args.out, "designs": designs}));
    } else {
        let counts: Vec<String> = designs.iter().map(|(d, n)| format!("{d} {n}")).collect();
        println!("wrote {} cases to {} ({})", cases.len(), args.out.display(), counts.join(", "));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Serve(a) => serve(cli, a),
        Command::Run(a) => run(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Benchgen(a) => benchgen_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                print_json(&e.to_json());
            } else {
                eprintln!("error: {e}");
                if let CliError::User { detail: Some(d), .. } = &e {
                    eprintln!("{}", serde_json::to_string_pretty(d).unwrap_or_default());
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
