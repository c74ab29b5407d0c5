// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::ToolPlan;
use crate::version::is_legal_label;

/// Latest versions produced for one design within a session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignVersions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syn_ver: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impl_ver: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub session_id: String,
    pub plans: Vec<ToolPlan>,
    pub versions: BTreeMap<String, DesignVersions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_design: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tech_node: Option<String>,
}

impl SessionContext {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self { session_id: session_id.into(), ..Default::default() }
    }

    pub fn design_versions(&self, design: &str) -> DesignVersions {
        self.versions.get(design).cloned().unwrap_or_default()
    }
}

pub type SharedSession = Arc<Mutex<SessionContext>>;

/// Sessions by id. Each session has its own lock, so plans in one session
/// run one at a time while distinct sessions proceed in parallel.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SharedSession>>,
    persist_dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Store that mirrors every saved session to `<dir>/<id>.json`.
    pub fn persistent(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { sessions: Mutex::default(), persist_dir: Some(dir) })
    }

    fn file(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.json"))
    }

    pub fn create(&self) -> (String, SharedSession) {
        let mut map = self.sessions.lock().expect("session map poisoned");
        loop {
            let id = format!("s{:016x}", rand::random::<u64>());
            let taken = map.contains_key(&id) || self.persist_dir.as_ref().is_some_and(|d| Self::file(d, &id).exists());
            if !taken {
                let session = Arc::new(Mutex::new(SessionContext::new(&id)));
                map.insert(id.clone(), session.clone());
                return (id, session);
            }
        }
    }

    /// Creates a session under a caller-chosen id, or returns the existing one.
    pub fn open(&self, id: &str) -> Option<SharedSession> {
        if !is_legal_label(id) {
            return None;
        }
        if let Some(s) = self.get(id) {
            return Some(s);
        }
        let mut map = self.sessions.lock().expect("session map poisoned");
        Some(map.entry(id.to_string()).or_insert_with(|| Arc::new(Mutex::new(SessionContext::new(id)))).clone())
    }

    pub fn get(&self, id: &str) -> Option<SharedSession> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        if let Some(s) = map.get(id) {
            return Some(s.clone());
        }
        let dir = self.persist_dir.as_ref()?;
        if !is_legal_label(id) {
            return None;
        }
        let text = fs::read_to_string(Self::file(dir, id)).ok()?;
        let ctx: SessionContext = serde_json::from_str(&text).ok()?;
        let session = Arc::new(Mutex::new(ctx));
        map.insert(id.to_string(), session.clone());
        Some(session)
    }

    pub fn save(&self, ctx: &SessionContext) -> io::Result<()> {
        let Some(dir) = &self.persist_dir else { return Ok(()) };
        let path = Self::file(dir, &ctx.session_id);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(ctx).map_err(io::Error::other)?)?;
        fs::rename(tmp, path)
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().expect("session map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }
}
