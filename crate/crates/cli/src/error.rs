// SPDX-License-Identifier: Apache-2.0

use edaflow::agent::AgentError;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input from the caller: exit status 1.
    #[error("{message}")]
    User { code: &'static str, message: String, detail: Option<Value> },
    /// Anything else: exit status 2.
    #[error("{message}")]
    Internal { code: &'static str, message: String },
}

impl CliError {
    pub fn user(code: &'static str, message: impl Into<String>) -> Self {
        CliError::User { code, message: message.into(), detail: None }
    }

    pub fn internal(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Internal { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::user("config_invalid", message)
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::User { code, .. } | CliError::Internal { code, .. } => code,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User { .. } => 1,
            CliError::Internal { .. } => 2,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut error = json!({"code": self.code(), "message": self.to_string()});
        if let CliError::User { detail: Some(d), .. } = self {
            error["detail"] = d.clone();
        }
        json!({"status": "error", "error": error})
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        let code = e.code();
        let message = e.to_string();
        match e {
            AgentError::ModelClientUnavailable(_) | AgentError::Persist(_) => CliError::Internal { code, message },
            AgentError::Conflicts(c) => CliError::User { code, message, detail: serde_json::to_value(c).ok() },
            AgentError::StageFailed(resp) => CliError::User { code, message, detail: serde_json::to_value(*resp).ok() },
            _ => CliError::User { code, message, detail: None },
        }
    }
}
