//! Versioned project files, one per procedure.
//!
//! Files are canonical JSON with top-level keys `reports, revision,
//! saved_at, schema_version, timeline`. Writes go to a temporary file in
//! the target directory which is then renamed over the destination.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::to_canonical_vec;
use crate::model::Timeline;
use crate::report::Report;
use crate::validate::{errors_only, validate_timeline, Diagnostic};

pub const SCHEMA_VERSION: u32 = 1;

/// File extension used for project files in a data directory.
pub const PROJECT_EXTENSION: &str = "json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("timeline has {} error diagnostic(s)", .0.len())]
    InvalidTimeline(Vec<Diagnostic>),
    #[error("I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("unsupported schema version {0}")]
    SchemaVersionUnsupported(u64),
    #[error("corrupt project file: {0}")]
    CorruptFile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFile {
    pub schema_version: u32,
    pub revision: u64,
    pub saved_at: DateTime<Utc>,
    pub timeline: Timeline,
    #[serde(default)]
    pub reports: Vec<Report>,
}

impl ProjectFile {
    /// A never-saved project at revision 0.
    pub fn new(timeline: Timeline) -> ProjectFile {
        ProjectFile {
            schema_version: SCHEMA_VERSION,
            revision: 0,
            saved_at: DateTime::<Utc>::UNIX_EPOCH,
            timeline,
            reports: Vec::new(),
        }
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("project serializes")
    }

    pub fn latest_report(&self) -> Option<&Report> {
        self.reports.last()
    }
}

fn check_timeline(timeline: &Timeline) -> Result<(), StoreError> {
    let errors = errors_only(validate_timeline(timeline));
    if errors.is_empty() {
        Ok(())
    } else {
        Err(StoreError::InvalidTimeline(errors))
    }
}

/// Saves with the current wall-clock time. Returns the project as written.
pub fn save_project(path: &Path, project: &ProjectFile) -> Result<ProjectFile, StoreError> {
    save_project_at(path, project, Utc::now())
}

/// Saves with an explicit `saved_at`, which makes the bytes reproducible.
pub fn save_project_at(
    path: &Path,
    project: &ProjectFile,
    saved_at: DateTime<Utc>,
) -> Result<ProjectFile, StoreError> {
    check_timeline(&project.timeline)?;
    let mut next = project.clone();
    next.schema_version = SCHEMA_VERSION;
    next.revision = project.revision + 1;
    next.saved_at = saved_at;
    let bytes = next.to_canonical_bytes();

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".colotag-")
        .suffix(".tmp")
        .tempfile_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| StoreError::IoFailure(e.error))?;
    Ok(next)
}

pub fn load_project(path: &Path) -> Result<ProjectFile, StoreError> {
    let project = load_project_unchecked(path)?;
    check_timeline(&project.timeline)?;
    Ok(project)
}

/// Parses and version-checks a project without validating its timeline.
pub fn load_project_unchecked(path: &Path) -> Result<ProjectFile, StoreError> {
    let bytes = std::fs::read(path)?;
    parse_project(&bytes)
}

pub fn parse_project(bytes: &[u8]) -> Result<ProjectFile, StoreError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| StoreError::CorruptFile(e.to_string()))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| StoreError::CorruptFile("missing schema_version".into()))?
        .as_u64()
        .ok_or_else(|| StoreError::CorruptFile("schema_version is not an integer".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(StoreError::SchemaVersionUnsupported(version));
    }
    serde_json::from_value(value).map_err(|e| StoreError::CorruptFile(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Label;
    use crate::report::{generate_report, PatientContext};
    use chrono::TimeZone;

    fn fixed_time() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 3, 1, 9, 30, 0).unwrap()
    }

    #[test]
    fn save_then_load_bumps_revision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case-1.json");
        let mut project = ProjectFile::new(fixtures::case_1());
        project.reports.push(generate_report(&project.timeline, &PatientContext::new()).unwrap());
        let saved = save_project_at(&path, &project, fixed_time()).unwrap();
        assert_eq!(saved.revision, 1);
        let loaded = load_project(&path).unwrap();
        assert_eq!(loaded, saved);
        let again = save_project_at(&path, &loaded, fixed_time()).unwrap();
        assert_eq!(again.revision, 2);
        assert_eq!(load_project(&path).unwrap().revision, 2);
    }

    #[test]
    fn top_level_keys() {
        let bytes = ProjectFile::new(fixtures::case_2()).to_canonical_bytes();
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["reports", "revision", "saved_at", "schema_version", "timeline"]);
    }

    #[test]
    fn invalid_timeline_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let mut t = fixtures::case_2();
        let first = t.annotations[0].clone();
        let mut dup = first.clone();
        dup.annotation_id = "a999".into();
        dup.label = Label::Sigmoid;
        t.annotations.push(dup);
        let err = save_project_at(&path, &ProjectFile::new(t), fixed_time()).unwrap_err();
        assert!(matches!(err, StoreError::InvalidTimeline(_)));
        assert!(!path.exists());
    }

    #[test]
    fn schema_version_checked() {
        let mut v: Value = serde_json::from_slice(&ProjectFile::new(fixtures::case_2()).to_canonical_bytes()).unwrap();
        v["schema_version"] = 99.into();
        let err = parse_project(v.to_string().as_bytes()).unwrap_err();
        assert!(matches!(err, StoreError::SchemaVersionUnsupported(99)));
    }

    #[test]
    fn truncated_is_corrupt() {
        let bytes = ProjectFile::new(fixtures::case_3()).to_canonical_bytes();
        for cut in [0, 1, bytes.len() / 2, bytes.len() - 1] {
            let err = parse_project(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, StoreError::CorruptFile(_)), "cut {cut}: {err:?}");
        }
    }

    #[test]
    fn missing_file_is_io_failure() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_project(&dir.path().join("nope.json")).unwrap_err();
        assert!(matches!(err, StoreError::IoFailure(_)));
    }

    #[test]
    fn no_temp_files_left_behind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        save_project_at(&path, &ProjectFile::new(fixtures::case_4()), fixed_time()).unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("p.json")]);
    }
}
