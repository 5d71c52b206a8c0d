//! Decomposed story components.
//!
//! A [`StoryProject`] is a plain value. Nothing in this module mutates a
//! project in place on behalf of callers; the revision engine builds new
//! project states and the persistence layer writes them out.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest;
use crate::revision::Revision;

/// Current on-disk / in-memory schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Number of scenes in a generated storyboard (3x2 grid).
pub const SCENE_COUNT: usize = 6;

pub const MIN_ENTITIES: usize = 1;
pub const MAX_ENTITIES: usize = 3;

/// Longest accepted tone label, in characters.
pub const MAX_TONE_CHARS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("seed text is empty")]
    EmptySeed,
    #[error("tone label is empty")]
    EmptyTone,
    #[error("tone label `{0}` is longer than {MAX_TONE_CHARS} characters")]
    ToneTooLong(String),
    #[error("malformed entity id `{0}`")]
    BadEntityId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Persona,
    Location,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Persona => "persona",
            EntityKind::Location => "location",
        }
    }
}

/// Identity of a persona or location. The kind is fixed at creation.
///
/// Serialized as `"<kind>-<n>"`, e.g. `persona-2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId {
    kind: EntityKind,
    value: String,
}

impl EntityId {
    pub fn new(kind: EntityKind, ordinal: usize) -> Self {
        Self {
            kind,
            value: format!("{}-{}", kind.as_str(), ordinal),
        }
    }

    pub fn persona(ordinal: usize) -> Self {
        Self::new(EntityKind::Persona, ordinal)
    }

    pub fn location(ordinal: usize) -> Self {
        Self::new(EntityKind::Location, ordinal)
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn as_str(&self) -> &str {
        &self.value
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let (kind, rest) = if let Some(rest) = s.strip_prefix("persona-") {
            (EntityKind::Persona, rest)
        } else if let Some(rest) = s.strip_prefix("location-") {
            (EntityKind::Location, rest)
        } else {
            return Err(ModelError::BadEntityId(s.to_string()));
        };
        if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ModelError::BadEntityId(s.to_string()));
        }
        Ok(Self {
            kind,
            value: s.to_string(),
        })
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

impl Serialize for EntityId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.value)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        EntityId::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedOrigin {
    User,
    AiSuggested,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedIdea {
    pub text: String,
    pub origin: SeedOrigin,
}

impl SeedIdea {
    /// Stores `text` verbatim; only whitespace-only input is rejected.
    pub fn new(text: impl Into<String>, origin: SeedOrigin) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptySeed);
        }
        Ok(Self { text, origin })
    }

    pub fn user(text: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(text, SeedOrigin::User)
    }
}

/// Short emotional descriptor ("Joyful", "Overconfident").
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Tone(String);

impl Tone {
    pub fn new(label: impl Into<String>) -> Result<Self, ModelError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(ModelError::EmptyTone);
        }
        if label.chars().count() > MAX_TONE_CHARS {
            return Err(ModelError::ToneTooLong(label));
        }
        Ok(Self(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Tone {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Tone::new(value)
    }
}

impl From<Tone> for String {
    fn from(tone: Tone) -> Self {
        tone.0
    }
}

impl fmt::Display for Tone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: EntityId,
    pub name: String,
    pub age: String,
    pub clothing: String,
    pub skin: String,
    pub hair: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub id: EntityId,
    pub name: String,
    pub description: String,
}

/// Borrowed view of any linkable entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityView<'a> {
    Persona(&'a Persona),
    Location(&'a Location),
}

impl<'a> EntityView<'a> {
    pub fn id(&self) -> &'a EntityId {
        match self {
            EntityView::Persona(p) => &p.id,
            EntityView::Location(l) => &l.id,
        }
    }

    pub fn name(&self) -> &'a str {
        match self {
            EntityView::Persona(p) => &p.name,
            EntityView::Location(l) => &l.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Storyline {
    pub text: String,
    pub tones: Vec<Tone>,
}

/// A generated image. Pixels are opaque; only the handle and the exact
/// prompt that produced it are tracked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAsset {
    pub handle: String,
    pub created_from_prompt: String,
    pub provider_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub index: u8,
    pub image_prompt: String,
    pub narration: String,
    pub tones: Vec<Tone>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageAsset>,
    pub stale: bool,
    /// Set when the storyline changed after this scene was last produced.
    /// Display hint only; nothing regenerates automatically.
    #[serde(default)]
    pub possibly_inconsistent: bool,
    /// Entities linked from this scene's texts, in first-mention order.
    #[serde(default)]
    pub links: Vec<EntityId>,
}

impl Scene {
    pub fn new(index: u8, image_prompt: impl Into<String>, narration: impl Into<String>) -> Self {
        Self {
            index,
            image_prompt: image_prompt.into(),
            narration: narration.into(),
            tones: Vec::new(),
            image: None,
            stale: false,
            possibly_inconsistent: false,
            links: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectStatus {
    /// Only the seed is set; component lists are empty.
    Ungenerated,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryProject {
    pub schema_version: u32,
    pub id: String,
    pub status: ProjectStatus,
    pub seed: SeedIdea,
    /// Style directive prepended to every scene prompt.
    #[serde(default)]
    pub style: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storyline: Option<Storyline>,
    pub personas: Vec<Persona>,
    pub locations: Vec<Location>,
    pub scenes: Vec<Scene>,
    pub revisions: Vec<Revision>,
}

pub const DEFAULT_STYLE: &str = "cinematic, vibrant colors, wide shot";

/// Derives a stable project id from the seed text.
pub fn project_id_for(seed: &SeedIdea) -> String {
    format!("p-{}", &digest::sha256_hex(seed.text.as_bytes())[..12])
}

/// Starts a project in the explicit ungenerated state.
pub fn new_project(seed: SeedIdea) -> StoryProject {
    StoryProject {
        schema_version: SCHEMA_VERSION,
        id: project_id_for(&seed),
        status: ProjectStatus::Ungenerated,
        seed,
        style: DEFAULT_STYLE.to_string(),
        storyline: None,
        personas: Vec::new(),
        locations: Vec::new(),
        scenes: Vec::new(),
        revisions: Vec::new(),
    }
}

impl StoryProject {
    /// All entities, personas first, each group in stored order.
    pub fn entities(&self) -> impl Iterator<Item = EntityView<'_>> {
        self.personas
            .iter()
            .map(EntityView::Persona)
            .chain(self.locations.iter().map(EntityView::Location))
    }

    pub fn entity(&self, id: &EntityId) -> Option<EntityView<'_>> {
        match id.kind() {
            EntityKind::Persona => self.persona(id).map(EntityView::Persona),
            EntityKind::Location => self.location(id).map(EntityView::Location),
        }
    }

    pub fn persona(&self, id: &EntityId) -> Option<&Persona> {
        self.personas.iter().find(|p| &p.id == id)
    }

    pub fn location(&self, id: &EntityId) -> Option<&Location> {
        self.locations.iter().find(|l| &l.id == id)
    }

    pub fn scene(&self, index: u8) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.index == index)
    }

    pub fn scene_mut(&mut self, index: u8) -> Option<&mut Scene> {
        self.scenes.iter_mut().find(|s| s.index == index)
    }

    /// Entity whose name equals `name` case-insensitively.
    pub fn entity_named(&self, name: &str) -> Option<EntityView<'_>> {
        let wanted = crate::link::fold_str(name);
        self.entities().find(|e| crate::link::fold_str(e.name()) == wanted)
    }

    /// Story-level tones (empty before generation).
    pub fn tones(&self) -> &[Tone] {
        self.storyline.as_ref().map(|s| s.tones.as_slice()).unwrap_or(&[])
    }

    pub fn next_revision_id(&self) -> u64 {
        self.revisions.last().map(|r| r.id + 1).unwrap_or(1)
    }

    /// Next free ordinal for a new entity id of `kind`.
    pub fn next_entity_ordinal(&self, kind: EntityKind) -> usize {
        self.entities().filter(|e| e.id().kind() == kind).count() + 1
    }

    /// Canonical JSON serialization used for byte-level comparisons.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("project serializes")
    }
}
