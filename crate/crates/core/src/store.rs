//! On-disk project archives.
//!
//! ```text
//! <root>/session
//! <root>/projects/<id>/manifest
//! <root>/projects/<id>/components/<component-id>
//! <root>/projects/<id>/assets/<digest>
//! <root>/projects/<id>/revisions/<n>
//! <root>/projects/<id>/archived
//! ```
//!
//! Records are pretty-printed JSON without file extensions. A save builds
//! the full directory under `projects/.staging-<id>` and swaps it in with two
//! renames; a crash between them leaves `projects/.old-<id>`, which the next
//! read or write renames back.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::genai::GeneratedImage;
use crate::model::{Location, Persona, ProjectStatus, Scene, SeedIdea, StoryProject, Storyline, SCHEMA_VERSION};
use crate::revision::Revision;
use crate::validate::{validate_project, ValidationReport};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("project `{0}` not found")]
    NotFound(String),
    #[error("`{record}` has schema version {found}; this build reads version {supported} only")]
    Migration { record: String, found: u64, supported: u32 },
    #[error("record `{record}` is corrupt: {reason}")]
    Corrupt { record: String, reason: String },
    #[error("record `{0}` is missing")]
    MissingRecord(String),
    #[error("refusing to save an invalid project")]
    Invalid(ValidationReport),
    #[error("asset `{0}` not found")]
    AssetNotFound(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Every mutating filesystem call the store makes. Reads go straight to
/// `std::fs`.
pub trait Backend: Send + Sync {
    fn write(&self, path: &Path, bytes: &[u8]) -> io::Result<()>;
    fn rename(&self, from: &Path, to: &Path) -> io::Result<()>;
    fn create_dir_all(&self, path: &Path) -> io::Result<()>;
    fn remove_dir_all(&self, path: &Path) -> io::Result<()>;
    fn hard_link(&self, from: &Path, to: &Path) -> io::Result<()>;
}

pub struct FsBackend;

impl Backend for FsBackend {
    fn write(&self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        fs::write(path, bytes)
    }

    fn rename(&self, from: &Path, to: &Path) -> io::Result<()> {
        fs::rename(from, to)
    }

    fn create_dir_all(&self, path: &Path) -> io::Result<()> {
        fs::create_dir_all(path)
    }

    fn remove_dir_all(&self, path: &Path) -> io::Result<()> {
        fs::remove_dir_all(path)
    }

    fn hard_link(&self, from: &Path, to: &Path) -> io::Result<()> {
        fs::hard_link(from, to).or_else(|_| fs::copy(from, to).map(|_| ()))
    }
}

/// Fails every operation from the `fail_from`-th on (1-based), as a full
/// disk would.
pub struct FaultyBackend {
    inner: Arc<dyn Backend>,
    fail_from: u64,
    ops: AtomicU64,
}

impl FaultyBackend {
    pub fn new(inner: Arc<dyn Backend>, fail_from: u64) -> Self {
        Self {
            inner,
            fail_from,
            ops: AtomicU64::new(0),
        }
    }

    pub fn ops(&self) -> u64 {
        self.ops.load(Ordering::SeqCst)
    }

    fn tick(&self) -> io::Result<()> {
        let n = self.ops.fetch_add(1, Ordering::SeqCst) + 1;
        if n >= self.fail_from {
            Err(io::Error::other("no space left on device (injected)"))
        } else {
            Ok(())
        }
    }
}

impl Backend for FaultyBackend {
    fn write(&self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        self.tick()?;
        self.inner.write(path, bytes)
    }

    fn rename(&self, from: &Path, to: &Path) -> io::Result<()> {
        self.tick()?;
        self.inner.rename(from, to)
    }

    fn create_dir_all(&self, path: &Path) -> io::Result<()> {
        self.tick()?;
        self.inner.create_dir_all(path)
    }

    fn remove_dir_all(&self, path: &Path) -> io::Result<()> {
        self.tick()?;
        self.inner.remove_dir_all(path)
    }

    fn hard_link(&self, from: &Path, to: &Path) -> io::Result<()> {
        self.tick()?;
        self.inner.hard_link(from, to)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub id: String,
    pub status: ProjectStatus,
    pub seed: SeedIdea,
    pub style: String,
    /// Component record ids in project order.
    pub components: Vec<String>,
    pub revisions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub current: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveMarker {
    pub archived_at: DateTime<Utc>,
}

fn to_record<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("record serializes");
    s.push('\n');
    s.into_bytes()
}

/// Guess an asset's media type from its leading bytes.
pub fn sniff_media_type(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG") {
        "image/png"
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        "image/jpeg"
    } else if bytes.starts_with(b"RIFF") && bytes.get(8..12) == Some(b"WEBP") {
        "image/webp"
    } else if bytes.starts_with(b"<svg") || bytes.starts_with(b"<?xml") {
        "image/svg+xml"
    } else {
        "application/octet-stream"
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub struct Store {
    root: PathBuf,
    backend: Arc<dyn Backend>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::with_backend(root, Arc::new(FsBackend))
    }

    pub fn with_backend(root: impl Into<PathBuf>, backend: Arc<dyn Backend>) -> Result<Self, StoreError> {
        let root = root.into();
        let projects = root.join("projects");
        fs::create_dir_all(&projects).map_err(io_at(&projects))?;
        Ok(Self {
            root,
            backend,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn projects(&self) -> PathBuf {
        self.root.join("projects")
    }

    pub fn project_dir(&self, id: &str) -> PathBuf {
        self.projects().join(id)
    }

    /// Writer lock for one project. Callers hold it across load-modify-save.
    pub fn project_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    fn old_dir(&self, id: &str) -> PathBuf {
        self.projects().join(format!(".old-{id}"))
    }

    fn staging_dir(&self, id: &str) -> PathBuf {
        self.projects().join(format!(".staging-{id}"))
    }

    /// Finish or roll back an interrupted swap.
    fn recover(&self, id: &str) -> Result<(), StoreError> {
        let dir = self.project_dir(id);
        let old = self.old_dir(id);
        if old.exists() {
            if dir.exists() {
                self.backend.remove_dir_all(&old).map_err(io_at(&old))?;
            } else {
                self.backend.rename(&old, &dir).map_err(io_at(&old))?;
            }
        }
        Ok(())
    }

    /// Directory holding the current archive, even mid-recovery.
    fn readable_dir(&self, id: &str) -> PathBuf {
        let dir = self.project_dir(id);
        if !dir.join("manifest").exists() && self.old_dir(id).join("manifest").exists() {
            return self.old_dir(id);
        }
        dir
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_id(id) && self.readable_dir(id).join("manifest").is_file()
    }

    /// Ids of every saved project, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let projects = self.projects();
        let mut ids: Vec<String> = fs::read_dir(&projects)
            .map_err(io_at(&projects))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter_map(|name| match name.strip_prefix(".old-") {
                Some(id) => Some(id.to_string()),
                None if !name.starts_with('.') => Some(name),
                None => None,
            })
            .filter(|id| self.exists(id))
            .collect();
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    /// `base`, or `base-2`, `base-3`, ... if taken.
    pub fn allocate_id(&self, base: &str) -> String {
        let taken = |id: &str| self.project_dir(id).exists() || self.old_dir(id).exists();
        if !taken(base) {
            return base.to_string();
        }
        (2..)
            .map(|n| format!("{base}-{n}"))
            .find(|id| !taken(id))
            .expect("unbounded")
    }

    fn component_records(project: &StoryProject) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        if let Some(s) = &project.storyline {
            out.push(("storyline".to_string(), to_record(s)));
        }
        for p in &project.personas {
            out.push((p.id.to_string(), to_record(p)));
        }
        for l in &project.locations {
            out.push((l.id.to_string(), to_record(l)));
        }
        for s in &project.scenes {
            out.push((format!("scene-{}", s.index), to_record(s)));
        }
        out
    }

    /// Atomically replace the archive for `project.id`. Returns the id.
    pub fn save(&self, project: &StoryProject) -> Result<String, StoreError> {
        if !valid_id(&project.id) {
            return Err(StoreError::Corrupt {
                record: "manifest".into(),
                reason: format!("invalid project id `{}`", project.id),
            });
        }
        let report = validate_project(project);
        if !report.ok {
            return Err(StoreError::Invalid(report));
        }
        let id = project.id.as_str();
        self.recover(id)?;
        let dir = self.project_dir(id);
        let staging = self.staging_dir(id);
        let b = &self.backend;
        if staging.exists() {
            b.remove_dir_all(&staging).map_err(io_at(&staging))?;
        }
        for sub in ["components", "assets", "revisions"] {
            let p = staging.join(sub);
            b.create_dir_all(&p).map_err(io_at(&p))?;
        }

        let components = Self::component_records(project);
        for (name, bytes) in &components {
            let p = staging.join("components").join(name);
            b.write(&p, bytes).map_err(io_at(&p))?;
        }
        for (n, rev) in project.revisions.iter().enumerate() {
            let p = staging.join("revisions").join((n + 1).to_string());
            b.write(&p, &to_record(rev)).map_err(io_at(&p))?;
        }
        if dir.is_dir() {
            let assets = dir.join("assets");
            if let Ok(entries) = fs::read_dir(&assets) {
                for e in entries.filter_map(|e| e.ok()) {
                    let to = staging.join("assets").join(e.file_name());
                    b.hard_link(&e.path(), &to).map_err(io_at(&to))?;
                }
            }
            let marker = dir.join("archived");
            if marker.is_file() {
                let bytes = fs::read(&marker).map_err(io_at(&marker))?;
                let p = staging.join("archived");
                b.write(&p, &bytes).map_err(io_at(&p))?;
            }
        }
        let manifest = Manifest {
            schema_version: project.schema_version,
            id: project.id.clone(),
            status: project.status,
            seed: project.seed.clone(),
            style: project.style.clone(),
            components: components.into_iter().map(|(n, _)| n).collect(),
            revisions: project.revisions.len(),
        };
        let p = staging.join("manifest");
        b.write(&p, &to_record(&manifest)).map_err(io_at(&p))?;

        let old = self.old_dir(id);
        if dir.exists() {
            b.rename(&dir, &old).map_err(io_at(&dir))?;
        }
        b.rename(&staging, &dir).map_err(io_at(&staging))?;
        if old.exists() {
            // The new archive is already in place; a leftover is cleaned up
            // by the next recover().
            let _ = b.remove_dir_all(&old);
        }
        Ok(project.id.clone())
    }

    fn read_record<T: DeserializeOwned>(dir: &Path, record: &str) -> Result<T, StoreError> {
        let path = dir.join(record);
        let body = match fs::read_to_string(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::MissingRecord(record.to_string())),
            Err(e) => return Err(io_at(&path)(e)),
        };
        serde_json::from_str(&body).map_err(|e| StoreError::Corrupt {
            record: record.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn manifest(&self, id: &str) -> Result<Manifest, StoreError> {
        if !self.exists(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let dir = self.readable_dir(id);
        let raw: Value = Self::read_record(&dir, "manifest")?;
        let version = raw.get("schema_version").and_then(Value::as_u64);
        match version {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(found) => {
                return Err(StoreError::Migration {
                    record: "manifest".into(),
                    found,
                    supported: SCHEMA_VERSION,
                })
            }
            None => {
                return Err(StoreError::Corrupt {
                    record: "manifest".into(),
                    reason: "no schema_version".into(),
                })
            }
        }
        serde_json::from_value(raw).map_err(|e| StoreError::Corrupt {
            record: "manifest".into(),
            reason: e.to_string(),
        })
    }

    pub fn load(&self, id: &str) -> Result<StoryProject, StoreError> {
        let manifest = self.manifest(id)?;
        let dir = self.readable_dir(id);
        let mut project = StoryProject {
            schema_version: manifest.schema_version,
            id: manifest.id,
            status: manifest.status,
            seed: manifest.seed,
            style: manifest.style,
            storyline: None,
            personas: Vec::new(),
            locations: Vec::new(),
            scenes: Vec::new(),
            revisions: Vec::new(),
        };
        for name in &manifest.components {
            let record = format!("components/{name}");
            if name == "storyline" {
                project.storyline = Some(Self::read_record::<Storyline>(&dir, &record)?);
            } else if name.starts_with("persona-") {
                project.personas.push(Self::read_record::<Persona>(&dir, &record)?);
            } else if name.starts_with("location-") {
                project.locations.push(Self::read_record::<Location>(&dir, &record)?);
            } else if name.starts_with("scene-") {
                project.scenes.push(Self::read_record::<Scene>(&dir, &record)?);
            } else {
                return Err(StoreError::Corrupt {
                    record: "manifest".into(),
                    reason: format!("unknown component `{name}`"),
                });
            }
        }
        for n in 1..=manifest.revisions {
            project
                .revisions
                .push(Self::read_record::<Revision>(&dir, &format!("revisions/{n}"))?);
        }
        Ok(project)
    }

    /// One component record, read without loading the rest of the project.
    pub fn load_component(&self, id: &str, component: &str) -> Result<Value, StoreError> {
        let manifest = self.manifest(id)?;
        if !manifest.components.iter().any(|c| c == component) {
            return Err(StoreError::MissingRecord(format!("components/{component}")));
        }
        Self::read_record(&self.readable_dir(id), &format!("components/{component}"))
    }

    /// Store image bytes under their handle. Existing assets are kept.
    pub fn put_asset(&self, id: &str, image: &GeneratedImage) -> Result<(), StoreError> {
        if !valid_id(id) || !valid_id(&image.asset.handle) {
            return Err(StoreError::AssetNotFound(image.asset.handle.clone()));
        }
        self.recover(id)?;
        let assets = self.project_dir(id).join("assets");
        self.backend.create_dir_all(&assets).map_err(io_at(&assets))?;
        let path = assets.join(&image.asset.handle);
        if path.exists() {
            return Ok(());
        }
        let tmp = assets.join(format!(".{}.tmp", image.asset.handle));
        self.backend.write(&tmp, &image.bytes).map_err(io_at(&tmp))?;
        self.backend.rename(&tmp, &path).map_err(io_at(&path))
    }

    /// Asset bytes and their media type.
    pub fn get_asset(&self, id: &str, handle: &str) -> Result<(Vec<u8>, &'static str), StoreError> {
        if !valid_id(id) || !valid_id(handle) {
            return Err(StoreError::AssetNotFound(handle.to_string()));
        }
        let path = self.readable_dir(id).join("assets").join(handle);
        match fs::read(&path) {
            Ok(bytes) => {
                let media = sniff_media_type(&bytes);
                Ok((bytes, media))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::AssetNotFound(handle.to_string())),
            Err(e) => Err(io_at(&path)(e)),
        }
    }

    pub fn archive_marker(&self, id: &str) -> Option<ArchiveMarker> {
        Self::read_record(&self.readable_dir(id), "archived").ok()
    }

    /// Mark a project archived. Returns `false` if it already was.
    pub fn archive(&self, id: &str, at: DateTime<Utc>) -> Result<bool, StoreError> {
        if !self.exists(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        if self.archive_marker(id).is_some() {
            return Ok(false);
        }
        self.recover(id)?;
        let dir = self.project_dir(id);
        let tmp = dir.join(".archived.tmp");
        self.backend
            .write(&tmp, &to_record(&ArchiveMarker { archived_at: at }))
            .map_err(io_at(&tmp))?;
        self.backend.rename(&tmp, &dir.join("archived")).map_err(io_at(&dir))?;
        Ok(true)
    }

    pub fn session(&self) -> Session {
        Self::read_record(&self.root, "session").unwrap_or_default()
    }

    pub fn set_session(&self, session: &Session) -> Result<(), StoreError> {
        let tmp = self.root.join(".session.tmp");
        self.backend.write(&tmp, &to_record(session)).map_err(io_at(&tmp))?;
        let path = self.root.join("session");
        self.backend.rename(&tmp, &path).map_err(io_at(&path))
    }
}
