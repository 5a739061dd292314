use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use super::{CreateSession, Session, SessionError};
use crate::error::Error;
use crate::trace::write_atomic;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("no session `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<Error> for StoreError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(m) => StoreError::Storage(m),
            other => StoreError::Session(SessionError::Invalid(other)),
        }
    }
}

/// Sessions in memory, each behind its own lock, mirrored to one JSON file
/// per session when a data directory is configured.
#[derive(Debug, Default)]
pub struct SessionStore {
    data_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `dir`, creating it if needed, and loads every saved session.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let storage = |e: std::io::Error| StoreError::Storage(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(&dir).map_err(storage)?;
        write_atomic(&dir.join(".probe"), b"")
            .map_err(|e| StoreError::Storage(format!("{}: {e}", dir.display())))?;
        std::fs::remove_file(dir.join(".probe")).map_err(storage)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir).map_err(storage)? {
            let path = entry.map_err(storage)?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let s = load_snapshot(&path)?;
                sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        Ok(SessionStore {
            data_dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    fn persist(&self, s: &Session) -> Result<(), StoreError> {
        if let Some(dir) = &self.data_dir {
            let json =
                serde_json::to_vec_pretty(s).map_err(|e| StoreError::Storage(e.to_string()))?;
            write_atomic(&dir.join(format!("{}.json", s.id)), &json)
                .map_err(|e| StoreError::Storage(e.to_string()))?;
        }
        Ok(())
    }

    pub fn create(&self, request: &CreateSession) -> Result<Session, StoreError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::create(id.clone(), request)?;
        self.persist(&session)?;
        self.sessions
            .write()
            .insert(id, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<Session>>, StoreError> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Runs `f` on a copy of the session under its lock and keeps the copy
    /// only if `f` succeeds and the snapshot reaches disk.
    pub fn update<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, SessionError>,
    ) -> Result<T, StoreError> {
        let handle = self.handle(id)?;
        let mut guard = handle.lock();
        let mut next = guard.clone();
        let out = f(&mut next)?;
        if next != *guard {
            self.persist(&next)?;
            *guard = next;
        }
        Ok(out)
    }

    pub fn read<T>(&self, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, StoreError> {
        let handle = self.handle(id)?;
        let guard = handle.lock();
        Ok(f(&guard))
    }
}

pub fn load_snapshot(path: &Path) -> Result<Session, StoreError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| StoreError::Storage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Storage(format!("{}: {e}", path.display())))
}
