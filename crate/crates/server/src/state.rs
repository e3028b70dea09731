//! In-process registry of procedure projects backed by a data directory.
//!
//! Every procedure has one project file `<data-dir>/<procedure_id>.json`.
//! Writers to the same procedure queue on a per-procedure mutex. Readers
//! take the last persisted snapshot without waiting for writers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use colotag_core::store::{load_project_unchecked, save_project_at, ProjectFile, StoreError, PROJECT_EXTENSION};
use colotag_core::Timeline;
use parking_lot::RwLock;

use crate::error::ApiError;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

struct Entry {
    path: PathBuf,
    writer: tokio::sync::Mutex<()>,
    current: RwLock<Arc<ProjectFile>>,
}

pub struct Registry {
    data_dir: PathBuf,
    entries: RwLock<BTreeMap<String, Arc<Entry>>>,
    clock: Clock,
}

/// Procedure ids double as file names: ASCII letters, digits, `-`, `_`
/// and `.`, not starting with a dot, at most 128 characters.
pub fn valid_procedure_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

pub fn project_path(data_dir: &Path, procedure_id: &str) -> PathBuf {
    data_dir.join(format!("{procedure_id}.{PROJECT_EXTENSION}"))
}

impl Registry {
    /// Loads every readable project in `data_dir`, creating the directory
    /// if needed. Unreadable files are logged and skipped. Projects whose
    /// timelines have errors are kept so they can be inspected, but every
    /// save of such a project is refused until the errors are gone.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Registry, StoreError> {
        let data_dir = data_dir.into();
        std::fs::create_dir_all(&data_dir)?;
        let mut entries = BTreeMap::new();
        for item in std::fs::read_dir(&data_dir)? {
            let path = item?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(PROJECT_EXTENSION) {
                continue;
            }
            match load_project_unchecked(&path) {
                Ok(project) => {
                    let id = project.timeline.procedure_id.clone();
                    if path != project_path(&data_dir, &id) {
                        tracing::warn!(path = %path.display(), %id, "file name does not match procedure id, skipped");
                        continue;
                    }
                    entries.insert(id, Arc::new(Entry::new(path, project)));
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "project not loaded"),
            }
        }
        Ok(Registry {
            data_dir,
            entries: RwLock::new(entries),
            clock: Arc::new(Utc::now),
        })
    }

    /// Replaces the wall clock used for `saved_at`.
    pub fn with_clock(mut self, clock: Clock) -> Registry {
        self.clock = clock;
        self
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.read().keys().cloned().collect()
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        self.entries
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownProcedure(id.to_string()))
    }

    pub fn snapshot(&self, id: &str) -> Result<Arc<ProjectFile>, ApiError> {
        Ok(self.entry(id)?.current.read().clone())
    }

    pub fn create(&self, timeline: Timeline) -> Result<Arc<ProjectFile>, ApiError> {
        let id = timeline.procedure_id.clone();
        if !valid_procedure_id(&id) {
            return Err(ApiError::InvalidRequest(format!("invalid procedure id {id:?}")));
        }
        let path = project_path(&self.data_dir, &id);
        let mut entries = self.entries.write();
        if entries.contains_key(&id) || path.exists() {
            return Err(ApiError::AlreadyExists(id));
        }
        let saved = save_project_at(&path, &ProjectFile::new(timeline), (self.clock)())?;
        let entry = Arc::new(Entry::new(path, saved));
        let snapshot = entry.current.read().clone();
        entries.insert(id, entry);
        Ok(snapshot)
    }

    /// Applies `change` to the current project and persists the result
    /// before publishing it. `expected_revision`, when given, must equal
    /// the current revision.
    pub async fn mutate<T>(
        &self,
        id: &str,
        expected_revision: Option<u64>,
        change: impl FnOnce(&ProjectFile) -> Result<(ProjectFile, T), ApiError>,
    ) -> Result<(Arc<ProjectFile>, T), ApiError> {
        let entry = self.entry(id)?;
        let _writer = entry.writer.lock().await;
        let current = entry.current.read().clone();
        if let Some(expected) = expected_revision {
            if expected != current.revision {
                return Err(ApiError::RevisionConflict {
                    expected,
                    current: current.revision,
                });
            }
        }
        let (next, out) = change(&current)?;
        let saved = Arc::new(save_project_at(&entry.path, &next, (self.clock)())?);
        *entry.current.write() = saved.clone();
        Ok((saved, out))
    }
}

impl Entry {
    fn new(path: PathBuf, project: ProjectFile) -> Entry {
        Entry {
            path,
            writer: tokio::sync::Mutex::new(()),
            current: RwLock::new(Arc::new(project)),
        }
    }
}
