// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use edaflow::agent::ModelClientConfig;
use edaflow::Stage;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Listener ports; 0 asks the OS for a free one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ports {
    pub agent: u16,
    pub synth: u16,
    pub placement: u16,
    pub cts: u16,
    pub route: u16,
}

impl Default for Ports {
    fn default() -> Self {
        Self { agent: 8000, synth: 8001, placement: 8002, cts: 8003, route: 8004 }
    }
}

impl Ports {
    pub fn stage(&self, stage: Stage) -> u16 {
        match stage {
            Stage::Synthesis => self.synth,
            Stage::Placement => self.placement,
            Stage::Cts => self.cts,
            Stage::Route => self.route,
        }
    }

    /// Service name and port, agent first.
    pub fn all(&self) -> [(&'static str, u16); 5] {
        [
            ("agent", self.agent),
            ("synth", self.synth),
            ("placement", self.placement),
            ("cts", self.cts),
            ("route", self.route),
        ]
    }
}

/// Names of the environment variables holding model-client settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEnv {
    pub url: String,
    pub model: String,
    pub key: String,
}

impl Default for ModelEnv {
    fn default() -> Self {
        Self {
            url: ModelClientConfig::URL_VAR.into(),
            model: ModelClientConfig::MODEL_VAR.into(),
            key: ModelClientConfig::KEY_VAR.into(),
        }
    }
}

impl ModelEnv {
    pub fn client_config(&self) -> Option<ModelClientConfig> {
        ModelClientConfig::from_env_names(&self.url, &self.model, &self.key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub workspace_root: PathBuf,
    pub host: String,
    pub ports: Ports,
    /// Execution backend file; the mock backend when absent.
    pub backend: Option<PathBuf>,
    pub model_env: ModelEnv,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            workspace_root: PathBuf::from("edaflow_ws"),
            host: "127.0.0.1".into(),
            ports: Ports::default(),
            backend: None,
            model_env: ModelEnv::default(),
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg: CliConfig =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        // relative paths in a config file are relative to that file
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.workspace_root.is_relative() {
            cfg.workspace_root = base.join(&cfg.workspace_root);
        }
        if let Some(b) = cfg.backend.as_mut().filter(|b| b.is_relative()) {
            *b = base.join(&*b);
        }
        Ok(cfg)
    }

    pub fn validate_ports(&self) -> Result<(), CliError> {
        let mut seen: BTreeMap<u16, &str> = BTreeMap::new();
        for (name, port) in self.ports.all() {
            if port == 0 {
                continue;
            }
            if let Some(other) = seen.insert(port, name) {
                return Err(CliError::config(format!("services {other} and {name} share port {port}")));
            }
        }
        Ok(())
    }

    /// Creates the workspace root and checks that it accepts files.
    pub fn prepare_root(&self) -> Result<(), CliError> {
        let root = &self.workspace_root;
        fs::create_dir_all(root).map_err(|e| CliError::config(format!("workspace root {}: {e}", root.display())))?;
        let probe = root.join(format!(".write-probe-{}", std::process::id()));
        fs::write(&probe, b"").map_err(|e| CliError::config(format!("workspace root {} is not writable: {e}", root.display())))?;
        let _ = fs::remove_file(probe);
        Ok(())
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.workspace_root.join(".edaflow").join("sessions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_ports_are_rejected() {
        let mut cfg = CliConfig::default();
        assert!(cfg.validate_ports().is_ok());
        cfg.ports.cts = cfg.ports.synth;
        let err = cfg.validate_ports().unwrap_err();
        assert_eq!(err.code(), "config_invalid");
        cfg.ports = Ports { agent: 0, synth: 0, placement: 0, cts: 0, route: 0 };
        assert!(cfg.validate_ports().is_ok());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edaflow.json");
        fs::write(&path, r#"{"workspace_root": "ws", "backend": "mock.json", "ports": {"agent": 9000, "synth": 9001, "placement": 9002, "cts": 9003, "route": 9004}}"#).unwrap();
        let cfg = CliConfig::load(&path).unwrap();
        assert_eq!(cfg.workspace_root, dir.path().join("ws"));
        assert_eq!(cfg.backend, Some(dir.path().join("mock.json")));
        assert_eq!(cfg.ports.stage(Stage::Cts), 9003);
        assert_eq!(cfg.host, "127.0.0.1");
        fs::write(&path, r#"{"workspace": "ws"}"#).unwrap();
        assert!(CliConfig::load(&path).is_err());
    }
}
