// SPDX-License-Identifier: Apache-2.0

//! HTTP front ends: one listener per stage service plus the agent.

use std::io::Write;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use edaflow::agent::{AgentError, Orchestrator};
use edaflow::services::{ServiceError, StageServices};
use edaflow::{protocol, Stage};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::watch;

use crate::error::CliError;

/// Time allowed for in-flight requests after a shutdown signal.
pub const DRAIN_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone)]
struct StageState {
    services: StageServices,
    stage: Stage,
}

fn service_status(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::WorkspaceConflict(_) | ServiceError::MissingUpstream { .. } => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error_body(status: StatusCode, code: &str, message: String) -> Response {
    (status, Json(json!({"status": "error", "error": {"code": code, "message": message}}))).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| error_body(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

async fn stage_health(State(st): State<StageState>) -> Json<Value> {
    Json(json!({"status": "ok", "service": st.stage.tool_name()}))
}

async fn stage_run(State(st): State<StageState>, Json(body): Json<Value>) -> Response {
    let result = match blocking(move || st.services.run_json(st.stage, body)).await {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    match result {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => error_body(service_status(&e), e.code(), e.to_string()),
    }
}

async fn stage_tools(State(st): State<StageState>) -> Json<Value> {
    Json(json!({"tools": [protocol::tool_descriptor(st.services.catalog(), st.stage)]}))
}

async fn stage_rpc(State(st): State<StageState>, body: String) -> Response {
    match blocking(move || protocol::handle_text(&st.services, st.stage, &body)).await {
        Ok(Some(reply)) => Json(reply).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(resp) => resp,
    }
}

pub fn stage_router(services: StageServices, stage: Stage) -> Router {
    Router::new()
        .route("/health", get(stage_health))
        .route("/run", post(stage_run))
        .route("/tools", get(stage_tools))
        .route("/rpc", post(stage_rpc))
        .with_state(StageState { services, stage })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRequest {
    prompt: String,
    #[serde(default)]
    session_id: Option<String>,
}

async fn agent_health(State(o): State<Arc<Orchestrator>>) -> Json<Value> {
    Json(json!({"status": "ok", "service": "agent", "extractor": o.extractor_name()}))
}

async fn agent_run(State(o): State<Arc<Orchestrator>>, Json(req): Json<AgentRequest>) -> Response {
    let result = blocking(move || {
        if let Some(id) = &req.session_id {
            if o.sessions().open(id).is_none() {
                return Err(AgentError::SessionUnknown(id.clone()));
            }
        }
        o.run(&req.prompt, req.session_id.as_deref())
    })
    .await;
    match result {
        Err(resp) => resp,
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(AgentError::StageFailed(resp))) => (StatusCode::UNPROCESSABLE_ENTITY, Json(*resp)).into_response(),
        Ok(Err(e)) => {
            let err = CliError::from(e);
            let status = if err.exit_code() == 1 { StatusCode::BAD_REQUEST } else { StatusCode::INTERNAL_SERVER_ERROR };
            (status, Json(err.to_json())).into_response()
        }
    }
}

pub fn agent_router(orchestrator: Arc<Orchestrator>) -> Router {
    Router::new()
        .route("/health", get(agent_health))
        .route("/agent/run", post(agent_run))
        .with_state(orchestrator)
}

async fn bind(host: &str, port: u16, name: &str) -> Result<TcpListener, CliError> {
    TcpListener::bind((host, port)).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => CliError::user("port_in_use", format!("{name}: port {port} is in use")),
        _ => CliError::config(format!("{name}: cannot bind {host}:{port}: {e}")),
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Binds every listener, prints one JSON line per bound address, then serves
/// until a shutdown signal arrives.
pub async fn serve(host: &str, routers: Vec<(&'static str, u16, Router)>) -> Result<(), CliError> {
    let mut bound = Vec::new();
    for (name, port, router) in routers {
        let listener = bind(host, port, name).await?;
        let addr: SocketAddr = listener.local_addr().map_err(|e| CliError::internal("io_failure", e.to_string()))?;
        bound.push((name, addr, listener, router));
    }
    {
        let mut out = std::io::stdout().lock();
        for (name, addr, _, _) in &bound {
            let _ = writeln!(out, "{}", json!({"service": name, "addr": addr.to_string()}));
        }
        let _ = out.flush();
    }
    let (tx, rx) = watch::channel(false);
    let mut tasks = Vec::new();
    for (name, addr, listener, router) in bound {
        log::info!("{name} listening on {addr}");
        let mut rx = rx.clone();
        tasks.push(tokio::spawn(async move {
            axum::serve(listener, router)
                .with_graceful_shutdown(async move {
                    let _ = rx.wait_for(|stop| *stop).await;
                })
                .await
        }));
    }
    shutdown_signal().await;
    log::info!("shutting down");
    let _ = tx.send(true);
    let drain = async {
        for t in tasks {
            let _ = t.await;
        }
    };
    if tokio::time::timeout(DRAIN_TIMEOUT, drain).await.is_err() {
        log::warn!("in-flight requests did not finish within {}s", DRAIN_TIMEOUT.as_secs());
    }
    Ok(())
}
