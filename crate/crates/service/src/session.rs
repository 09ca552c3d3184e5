use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use duanzai_core::prompt::Role;
use serde::{Deserialize, Serialize};

use crate::analysis::Analysis;

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnError {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnError>,
}

/// One conversation. Turns alternate user, assistant, starting with user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatSession {
    pub session_id: String,
    pub turns: Vec<Turn>,
    /// Unix milliseconds.
    pub created_at: u64,
    pub last_active: u64,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>) -> Self {
        let now = now_millis();
        Self {
            session_id: session_id.into(),
            turns: Vec::new(),
            created_at: now,
            last_active: now,
        }
    }

    /// Appends a user turn and its answer as one step, keeping the
    /// alternation invariant.
    pub fn push_exchange(&mut self, user: Turn, assistant: Turn) {
        debug_assert_eq!(user.role, Role::User);
        debug_assert_eq!(assistant.role, Role::Assistant);
        self.turns.push(user);
        self.turns.push(assistant);
        self.last_active = now_millis();
    }

    pub fn is_well_formed(&self) -> bool {
        self.turns.len().is_multiple_of(2)
            && self.turns.iter().enumerate().all(|(i, t)| {
                t.role == if i % 2 == 0 { Role::User } else { Role::Assistant }
            })
    }
}

/// Where sessions go after each exchange.
pub trait SessionPersistence: Send + Sync {
    fn save(&self, session: &ChatSession) -> io::Result<()>;
    fn remove(&self, session_id: &str) -> io::Result<()>;
}

/// Keeps nothing.
#[derive(Debug, Default)]
pub struct NoPersistence;

impl SessionPersistence for NoPersistence {
    fn save(&self, _: &ChatSession) -> io::Result<()> {
        Ok(())
    }

    fn remove(&self, _: &str) -> io::Result<()> {
        Ok(())
    }
}

/// One `<session_id>.json` transcript per session.
#[derive(Debug)]
pub struct JsonDirPersistence {
    dir: PathBuf,
}

impl JsonDirPersistence {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, session_id: &str) -> PathBuf {
        // ids are generated uuids; never let one escape the directory
        let safe: String = session_id
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '-')
            .collect();
        self.dir.join(format!("{safe}.json"))
    }
}

impl SessionPersistence for JsonDirPersistence {
    fn save(&self, session: &ChatSession) -> io::Result<()> {
        let path = self.path(&session.session_id);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(session)?)?;
        fs::rename(tmp, path)
    }

    fn remove(&self, session_id: &str) -> io::Result<()> {
        match fs::remove_file(self.path(session_id)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }
}

pub type SessionHandle = Arc<tokio::sync::Mutex<ChatSession>>;

/// Concurrent map of sessions. The map lock is held only for lookups; each
/// session has its own async lock so exchanges on one session are totally
/// ordered while different sessions proceed in parallel.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SessionHandle>>,
    ttl: Duration,
    persistence: Box<dyn SessionPersistence>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self::with_persistence(ttl, Box::new(NoPersistence))
    }

    pub fn with_persistence(ttl: Duration, persistence: Box<dyn SessionPersistence>) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            ttl,
            persistence,
        }
    }

    fn map(&self) -> std::sync::MutexGuard<'_, HashMap<String, SessionHandle>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The session for `id`, or a fresh one under a new id when `id` is
    /// absent or unknown.
    pub fn get_or_create(&self, id: Option<&str>) -> (String, SessionHandle) {
        let mut map = self.map();
        if let Some(h) = id.and_then(|id| map.get(id)) {
            return (id.unwrap().to_string(), h.clone());
        }
        let id = uuid::Uuid::new_v4().to_string();
        let handle = Arc::new(tokio::sync::Mutex::new(ChatSession::new(id.clone())));
        map.insert(id.clone(), handle.clone());
        (id, handle)
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.map().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.map().len()
    }

    pub fn is_empty(&self) -> bool {
        self.map().is_empty()
    }

    pub fn persist(&self, session: &ChatSession) {
        if let Err(e) = self.persistence.save(session) {
            tracing::warn!(error = %e, session = %session.session_id, "could not persist session");
        }
    }

    /// Drops sessions idle for longer than the TTL as of `now` (unix ms).
    /// Sessions busy in an exchange are kept.
    pub fn evict_expired(&self, now: u64) -> usize {
        let ttl = self.ttl.as_millis() as u64;
        let mut map = self.map();
        let expired: Vec<String> = map
            .iter()
            .filter(|(_, h)| {
                h.try_lock()
                    .map(|s| now.saturating_sub(s.last_active) > ttl)
                    .unwrap_or(false)
            })
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            map.remove(id);
            if let Err(e) = self.persistence.remove(id) {
                tracing::warn!(error = %e, session = %id, "could not remove persisted session");
            }
        }
        expired.len()
    }
}
