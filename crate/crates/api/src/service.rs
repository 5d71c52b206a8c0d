//! Blocking engine operations against a store. Shared by the HTTP
//! handlers and the CLI.

use std::collections::BTreeMap;
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use storyweave_core::digest::sha256_hex;
use storyweave_core::export::ExporterRegistry;
use storyweave_core::model::{SeedIdea, SeedOrigin, StoryProject};
use storyweave_core::store::{ArchiveMarker, Session};
use storyweave_core::{Applied, ComponentRef, RevisionError, Store, Studio};

use crate::error::{ApiError, ErrorCode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Idea {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StartOver {
    pub project_id: String,
    pub archived_at: chrono::DateTime<chrono::Utc>,
    /// `true` when the project had already been archived.
    pub already_archived: bool,
    pub session: Session,
    pub screen: &'static str,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub struct Service {
    store: Store,
    studio: Studio,
    exporters: ExporterRegistry,
    suggestions: Mutex<BTreeMap<String, String>>,
    create_lock: Mutex<()>,
}

impl Service {
    pub fn new(store: Store, studio: Studio) -> Self {
        Self {
            store,
            studio,
            exporters: ExporterRegistry::with_builtin(),
            suggestions: Mutex::new(BTreeMap::new()),
            create_lock: Mutex::new(()),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn studio(&self) -> &Studio {
        &self.studio
    }

    pub fn exporters(&self) -> &ExporterRegistry {
        &self.exporters
    }

    /// Four fresh suggestions. Ids stay valid for the life of the process.
    pub fn ideas(&self) -> Result<Vec<Idea>, ApiError> {
        let texts = self.studio.suggest_ideas()?;
        let ideas: Vec<Idea> = texts
            .into_iter()
            .map(|text| Idea {
                id: format!("idea-{}", &sha256_hex(text.as_bytes())[..12]),
                text,
            })
            .collect();
        let mut known = lock(&self.suggestions);
        for i in &ideas {
            known.insert(i.id.clone(), i.text.clone());
        }
        Ok(ideas)
    }

    /// Seed from exactly one of free text or a suggestion id.
    pub fn seed(&self, text: Option<&str>, suggestion_id: Option<&str>) -> Result<SeedIdea, ApiError> {
        match (text, suggestion_id) {
            (Some(t), None) => Ok(SeedIdea::new(t, SeedOrigin::User)?),
            (None, Some(id)) => {
                let text = lock(&self.suggestions)
                    .get(id)
                    .cloned()
                    .ok_or_else(|| ApiError::new(ErrorCode::SuggestionNotFound, format!("no suggestion `{id}`")))?;
                Ok(SeedIdea::new(text, SeedOrigin::AiSuggested)?)
            }
            (None, None) => Err(ApiError::new(ErrorCode::EmptySeed, "give a seed or a suggestion_id")),
            (Some(_), Some(_)) => Err(ApiError::invalid("give either a seed or a suggestion_id, not both")),
        }
    }

    /// Run the full pipeline and persist the result as a new project, which
    /// becomes the session's current project.
    pub fn create(&self, seed: SeedIdea) -> Result<StoryProject, ApiError> {
        let generated = self.studio.create_project(seed)?;
        let mut project = generated.project;
        let _guard = lock(&self.create_lock);
        project.id = self.store.allocate_id(&project.id);
        for a in &generated.assets {
            self.store.put_asset(&project.id, a)?;
        }
        self.store.save(&project)?;
        self.store.set_session(&Session {
            current: Some(project.id.clone()),
        })?;
        tracing::info!(project = %project.id, "created");
        Ok(project)
    }

    pub fn load(&self, id: &str) -> Result<StoryProject, ApiError> {
        Ok(self.store.load(id)?)
    }

    pub fn archived(&self, id: &str) -> Option<ArchiveMarker> {
        self.store.archive_marker(id)
    }

    pub fn list(&self) -> Result<Vec<String>, ApiError> {
        Ok(self.store.list()?)
    }

    pub fn session(&self) -> Session {
        self.store.session()
    }

    /// Load, apply `op`, store new assets, save. Holds the project's writer
    /// lock throughout, so concurrent mutations see each other's results.
    fn mutate(
        &self,
        id: &str,
        op: impl FnOnce(&Studio, &StoryProject) -> Result<Option<Applied>, RevisionError>,
    ) -> Result<(StoryProject, Option<Applied>), ApiError> {
        let project_lock = self.store.project_lock(id);
        let _guard = lock(&project_lock);
        let project = self.store.load(id)?;
        if self.store.archive_marker(id).is_some() {
            return Err(ApiError::new(
                ErrorCode::ProjectArchived,
                format!("project `{id}` is archived and read-only"),
            ));
        }
        let Some(applied) = op(&self.studio, &project)? else {
            return Ok((project, None));
        };
        for a in &applied.assets {
            self.store.put_asset(id, a)?;
        }
        self.store.save(&applied.project)?;
        tracing::info!(project = id, revision = applied.revision.id, target = %applied.revision.target, "committed");
        Ok((applied.project.clone(), Some(applied)))
    }

    pub fn revise(&self, id: &str, target: &str, instruction: &str) -> Result<Applied, ApiError> {
        let target: ComponentRef = target.parse()?;
        let (_, applied) = self.mutate(id, |s, p| s.revise(p, &target, instruction).map(Some))?;
        Ok(applied.expect("revise always commits"))
    }

    pub fn regenerate_scene(&self, id: &str, index: &str) -> Result<Applied, ApiError> {
        let index: u8 = index.parse().map_err(|_| {
            ApiError::new(
                ErrorCode::SceneOutOfRange,
                format!("scene index `{index}` is out of range"),
            )
        })?;
        let (_, applied) = self.mutate(id, |s, p| s.regenerate_scene(p, index).map(Some))?;
        Ok(applied.expect("regenerate always commits"))
    }

    /// `None` when no scene was stale.
    pub fn regenerate_stale(&self, id: &str) -> Result<(StoryProject, Option<Applied>), ApiError> {
        self.mutate(id, |s, p| s.regenerate_stale(p))
    }

    pub fn undo(&self, id: &str) -> Result<Applied, ApiError> {
        let (_, applied) = self.mutate(id, |s, p| s.undo(p).map(Some))?;
        Ok(applied.expect("undo always commits"))
    }

    /// Archive the project and clear the session. Repeating it is harmless.
    pub fn start_over(&self, id: &str) -> Result<StartOver, ApiError> {
        let project_lock = self.store.project_lock(id);
        let _guard = lock(&project_lock);
        let now = self.studio.clock().now();
        let newly = self.store.archive(id, now)?;
        let session = Session::default();
        self.store.set_session(&session)?;
        let marker = self
            .store
            .archive_marker(id)
            .ok_or_else(|| ApiError::new(ErrorCode::StorageError, "archive marker missing after archiving"))?;
        Ok(StartOver {
            project_id: id.to_string(),
            archived_at: marker.archived_at,
            already_archived: !newly,
            session,
            screen: "seed",
        })
    }

    /// Media type and document text.
    pub fn export(&self, id: &str, format: &str, asset_base: &str) -> Result<(&'static str, String), ApiError> {
        let exporter = self.exporters.get(format)?;
        let project = self.store.load(id)?;
        let body = self.exporters.export(format, &project, asset_base)?;
        Ok((exporter.media_type(), body))
    }

    pub fn asset(&self, id: &str, handle: &str) -> Result<(Vec<u8>, &'static str), ApiError> {
        if !self.store.exists(id) {
            return Err(ApiError::new(
                ErrorCode::ProjectNotFound,
                format!("project `{id}` not found"),
            ));
        }
        Ok(self.store.get_asset(id, handle)?)
    }
}
