//! In-memory datasets and sessions with an optional write-through snapshot
//! directory (`datasets/<id>.csv`, `sessions/<id>.json`).

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use whatif_core::api::{Analysis, SessionRequest, SessionSummary};
use whatif_core::{parse_csv, Dataset};

/// Session content as stored and as returned by `GET /api/sessions/{id}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_at: String,
    pub request: SessionRequest,
    pub analysis: Analysis,
}

#[derive(Debug, Serialize)]
pub struct SessionView<'a> {
    #[serde(flatten)]
    pub summary: SessionSummary,
    pub created_at: &'a str,
    pub request: &'a SessionRequest,
}

impl Session {
    pub fn summary(&self) -> SessionSummary {
        self.analysis.summary(&self.id)
    }

    pub fn view(&self) -> SessionView<'_> {
        SessionView {
            summary: self.summary(),
            created_at: &self.created_at,
            request: &self.request,
        }
    }
}

#[derive(Default)]
pub struct Store {
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    goal_slots: Mutex<HashSet<String>>,
    snapshot_dir: Option<PathBuf>,
}

/// Exclusive goal slot for one session; released on drop.
pub struct GoalSlot<'a> {
    store: &'a Store,
    session: String,
}

impl Drop for GoalSlot<'_> {
    fn drop(&mut self) {
        self.store
            .goal_slots
            .lock()
            .expect("goal slot lock")
            .remove(&self.session);
    }
}

impl Store {
    /// Opens the store, reloading any snapshots found in `snapshot_dir`.
    pub fn open(snapshot_dir: Option<PathBuf>) -> io::Result<Self> {
        let store = Store {
            snapshot_dir,
            ..Store::default()
        };
        if let Some(dir) = &store.snapshot_dir {
            fs::create_dir_all(dir.join("datasets"))?;
            fs::create_dir_all(dir.join("sessions"))?;
            store.reload(dir)?;
        }
        Ok(store)
    }

    fn reload(&self, dir: &Path) -> io::Result<()> {
        for entry in sorted_entries(&dir.join("datasets"), "csv")? {
            let bytes = fs::read(&entry)?;
            match parse_csv(&bytes) {
                Ok(ds) => {
                    self.datasets
                        .write()
                        .expect("dataset lock")
                        .insert(ds.id().to_string(), Arc::new(ds));
                }
                Err(e) => tracing::warn!("skipping snapshot {}: {e}", entry.display()),
            }
        }
        for entry in sorted_entries(&dir.join("sessions"), "json")? {
            let text = fs::read_to_string(&entry)?;
            let mut session: Session = match serde_json::from_str(&text) {
                Ok(s) => s,
                Err(e) => {
                    tracing::warn!("skipping snapshot {}: {e}", entry.display());
                    continue;
                }
            };
            let Some(ds) = self.dataset(&session.analysis.dataset_id) else {
                tracing::warn!("skipping snapshot {}: dataset missing", entry.display());
                continue;
            };
            if let Err(e) = session.analysis.attach(&ds) {
                tracing::warn!("skipping snapshot {}: {e}", entry.display());
                continue;
            }
            self.sessions
                .write()
                .expect("session lock")
                .insert(session.id.clone(), Arc::new(session));
        }
        Ok(())
    }

    pub fn dataset(&self, id: &str) -> Option<Arc<Dataset>> {
        self.datasets.read().expect("dataset lock").get(id).cloned()
    }

    /// Stores a parsed dataset; re-uploading identical bytes is a no-op.
    pub fn insert_dataset(&self, dataset: Dataset, raw: &[u8]) -> io::Result<Arc<Dataset>> {
        let id = dataset.id().to_string();
        if let Some(existing) = self.dataset(&id) {
            return Ok(existing);
        }
        if let Some(dir) = &self.snapshot_dir {
            write_atomic(&dir.join("datasets").join(format!("{id}.csv")), raw)?;
        }
        let ds = Arc::new(dataset);
        self.datasets
            .write()
            .expect("dataset lock")
            .entry(id)
            .or_insert_with(|| ds.clone());
        Ok(ds)
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().expect("session lock").get(id).cloned()
    }

    /// Stores a session unless one with the same id exists; returns the stored one.
    pub fn insert_session(&self, session: Session) -> io::Result<Arc<Session>> {
        if let Some(existing) = self.session(&session.id) {
            return Ok(existing);
        }
        if let Some(dir) = &self.snapshot_dir {
            let text = serde_json::to_vec_pretty(&session).map_err(io::Error::other)?;
            write_atomic(&dir.join("sessions").join(format!("{}.json", session.id)), &text)?;
        }
        let mut map = self.sessions.write().expect("session lock");
        Ok(map
            .entry(session.id.clone())
            .or_insert_with(|| Arc::new(session))
            .clone())
    }

    /// Claims the goal slot of `session`, or `None` when one is already running.
    pub fn claim_goal(&self, session: &str) -> Option<GoalSlot<'_>> {
        let mut slots = self.goal_slots.lock().expect("goal slot lock");
        if !slots.insert(session.to_string()) {
            return None;
        }
        Some(GoalSlot {
            store: self,
            session: session.to_string(),
        })
    }
}

fn sorted_entries(dir: &Path, ext: &str) -> io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    out.sort();
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}
