//! Component-scoped edits and their propagation through the link graph.
//!
//! Every operation takes the current project by reference and returns a new
//! project state, so a failed operation leaves the caller's value untouched.
//!
//! Rules:
//! - persona / location edits reassemble exactly the scenes that mention
//!   the entity (before or after the edit) and mark their images stale;
//! - a scene image-prompt edit marks only that scene stale;
//! - a storyline edit flags scenes as possibly inconsistent and regenerates
//!   nothing;
//! - images are never regenerated implicitly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::genai::{generate, GenerateError, GeneratedImage, Provider, ProviderRequest};
use crate::link::{self, build_graph, LinkError, Span, TextField};
use crate::model::{
    EntityId, EntityKind, EntityView, Location, Persona, ProjectStatus, Scene, StoryProject, Storyline, Tone,
    SCENE_COUNT,
};
use crate::prompt::{PromptEngine, PromptError, RevisionSubject};
use crate::schema::{
    LocationOut, OutputSpec, PersonaOut, RevisedSceneTextOut, RevisedStorylineOut, SceneRenderOut, SchemaId,
};
use crate::validate::{validate_project, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneField {
    ImagePrompt,
    Narration,
}

/// Addresses one component of a project.
///
/// Text form: `storyline`, `storyboard`, `persona-1`, `location-2`,
/// `scene-3`, `scene-3.image_prompt`, `scene-3.narration`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentRef {
    Storyline,
    Storyboard,
    Entity(EntityId),
    Scene { index: u8, field: Option<SceneField> },
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentRef::Storyline => f.write_str("storyline"),
            ComponentRef::Storyboard => f.write_str("storyboard"),
            ComponentRef::Entity(id) => write!(f, "{id}"),
            ComponentRef::Scene { index, field: None } => write!(f, "scene-{index}"),
            ComponentRef::Scene {
                index,
                field: Some(SceneField::ImagePrompt),
            } => write!(f, "scene-{index}.image_prompt"),
            ComponentRef::Scene {
                index,
                field: Some(SceneField::Narration),
            } => write!(f, "scene-{index}.narration"),
        }
    }
}

impl FromStr for ComponentRef {
    type Err = RevisionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || RevisionError::UnknownComponent(s.to_string());
        match s {
            "storyline" => return Ok(ComponentRef::Storyline),
            "storyboard" => return Ok(ComponentRef::Storyboard),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("scene-") {
            let (index, field) = match rest.split_once('.') {
                Some((i, "image_prompt")) => (i, Some(SceneField::ImagePrompt)),
                Some((i, "narration")) => (i, Some(SceneField::Narration)),
                Some(_) => return Err(unknown()),
                None => (rest, None),
            };
            let index: u8 = index.parse().map_err(|_| unknown())?;
            return Ok(ComponentRef::Scene { index, field });
        }
        EntityId::parse(s).map(ComponentRef::Entity).map_err(|_| unknown())
    }
}

impl Serialize for ComponentRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RevisionKind {
    Edit,
    Regenerate,
    Undo { reverts: u64 },
}

/// Full values of every component a revision touched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storyline: Option<Storyline>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub personas: Vec<Persona>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub locations: Vec<Location>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenes: Vec<Scene>,
}

impl Snapshot {
    /// Overwrite the matching components of `project` with this snapshot.
    pub fn apply_to(&self, project: &mut StoryProject) {
        if let Some(s) = &self.storyline {
            project.storyline = Some(s.clone());
        }
        for p in &self.personas {
            if let Some(slot) = project.personas.iter_mut().find(|x| x.id == p.id) {
                *slot = p.clone();
            }
        }
        for l in &self.locations {
            if let Some(slot) = project.locations.iter_mut().find(|x| x.id == l.id) {
                *slot = l.clone();
            }
        }
        for s in &self.scenes {
            if let Some(slot) = project.scene_mut(s.index) {
                *slot = s.clone();
            }
        }
    }

    /// The same components as `self`, read from `project`.
    fn read_matching(&self, project: &StoryProject) -> Snapshot {
        Snapshot {
            storyline: self.storyline.as_ref().and(project.storyline.clone()),
            personas: self
                .personas
                .iter()
                .filter_map(|p| project.persona(&p.id).cloned())
                .collect(),
            locations: self
                .locations
                .iter()
                .filter_map(|l| project.location(&l.id).cloned())
                .collect(),
            scenes: self
                .scenes
                .iter()
                .filter_map(|s| project.scene(s.index).cloned())
                .collect(),
        }
    }
}

/// Before/after snapshots of every component that differs between `old`
/// and `new`, plus `target` even when unchanged.
fn diff(old: &StoryProject, new: &StoryProject, target: &ComponentRef) -> (Snapshot, Snapshot) {
    let mut before = Snapshot::default();
    let mut after = Snapshot::default();
    if old.storyline != new.storyline || *target == ComponentRef::Storyline {
        before.storyline = old.storyline.clone();
        after.storyline = new.storyline.clone();
    }
    for p in &old.personas {
        let n = new.persona(&p.id);
        if n != Some(p) || *target == ComponentRef::Entity(p.id.clone()) {
            before.personas.push(p.clone());
            after.personas.extend(n.cloned());
        }
    }
    for l in &old.locations {
        let n = new.location(&l.id);
        if n != Some(l) || *target == ComponentRef::Entity(l.id.clone()) {
            before.locations.push(l.clone());
            after.locations.extend(n.cloned());
        }
    }
    for s in &old.scenes {
        let n = new.scene(s.index);
        let targeted = matches!(target, ComponentRef::Scene { index, .. } if *index == s.index);
        if n != Some(s) || targeted {
            before.scenes.push(s.clone());
            after.scenes.extend(n.cloned());
        }
    }
    (before, after)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationResult {
    pub dirty_scenes: BTreeSet<u8>,
    pub reassembled_prompts: BTreeMap<u8, String>,
    pub images_invalidated: BTreeSet<u8>,
    pub storyline_touched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub id: u64,
    #[serde(flatten)]
    pub kind: RevisionKind,
    pub target: ComponentRef,
    pub instruction: String,
    pub before: Snapshot,
    pub after: Snapshot,
    pub propagation: PropagationResult,
    pub timestamp: DateTime<Utc>,
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always returns the same instant.
pub struct FixedClock(pub DateTime<Utc>);

impl FixedClock {
    pub fn epoch() -> Self {
        Self(Utc.timestamp_opt(0, 0).unwrap())
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

#[derive(Debug, Error)]
pub enum RevisionError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("no component `{0}`")]
    UnknownComponent(String),
    #[error("component `{0}` cannot be revised by instruction")]
    NotRevisable(ComponentRef),
    #[error("scene index {0} is out of range 1..={SCENE_COUNT}")]
    SceneOutOfRange(u8),
    #[error("project has not been generated yet")]
    NotGenerated,
    #[error("name `{name}` is already used by {existing}")]
    NameCollision { name: String, existing: EntityId },
    #[error("revised project is invalid: {}", .0.violations.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(ValidationReport),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error(transparent)]
    Generation(#[from] GenerateError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Link(#[from] LinkError),
}

/// Shared inputs for operations that call a provider.
#[derive(Clone, Copy)]
pub struct EditContext<'a> {
    pub provider: &'a dyn Provider,
    pub prompts: &'a PromptEngine,
    pub clock: &'a dyn Clock,
    pub budget: u32,
}

/// A committed change: the new state, its revision record, and any image
/// bytes that need storing.
#[derive(Debug, Clone)]
pub struct Applied {
    pub project: StoryProject,
    pub revision: Revision,
    pub assets: Vec<GeneratedImage>,
}

fn entities(project: &StoryProject) -> Vec<EntityView<'_>> {
    project.entities().collect()
}

fn refresh_scene_links(project: &mut StoryProject, indices: impl IntoIterator<Item = u8>) {
    let snapshot = project.clone();
    let ents = entities(&snapshot);
    for i in indices {
        if let Some(scene) = project.scene_mut(i) {
            scene.links = link::scene_links(scene, &ents);
        }
    }
}

fn render_prompts(
    prompts: &PromptEngine,
    project: &StoryProject,
    indices: &BTreeSet<u8>,
) -> Result<BTreeMap<u8, String>, PromptError> {
    let graph = build_graph(project);
    indices
        .iter()
        .filter_map(|i| project.scene(*i))
        .map(|s| Ok((s.index, prompts.scene_prompt(s, project, &graph)?)))
        .collect()
}

fn check_valid(project: &StoryProject) -> Result<(), RevisionError> {
    let report = validate_project(project);
    if report.ok {
        Ok(())
    } else {
        Err(RevisionError::Invalid(report))
    }
}

/// Recompute everything downstream of `changed` entities.
///
/// `prior` is the state before the entity edit and `edited` the state with
/// only the entity records replaced. Renames are rewritten into every text
/// that mentioned the old name. The dirty set is every scene that mentions
/// a changed entity either before or after the edit.
pub fn propagate(
    prompts: &PromptEngine,
    prior: &StoryProject,
    edited: StoryProject,
    changed: &BTreeSet<EntityId>,
) -> Result<(StoryProject, PropagationResult), RevisionError> {
    if changed.is_empty() {
        return Ok((edited, PropagationResult::default()));
    }
    for id in changed {
        if edited.entity(id).is_none() {
            return Err(LinkError::UnknownEntity(id.clone()).into());
        }
    }
    let old_graph = build_graph(prior);
    let before = old_graph.dirty_set(changed)?;

    let mut project = edited;
    let mut rewrites: BTreeMap<TextField, Vec<(Span, String)>> = BTreeMap::new();
    for id in changed {
        let old = prior.entity(id).ok_or_else(|| LinkError::UnknownEntity(id.clone()))?;
        let new_name = project.entity(id).expect("checked above").name().to_string();
        if old.name() == new_name {
            continue;
        }
        for r in old_graph.refs_to(id) {
            rewrites.entry(r.field).or_default().push((r.span, new_name.clone()));
        }
    }
    let mut storyline_touched = false;
    for (field, edits) in &rewrites {
        match *field {
            TextField::Storyline => {
                if let Some(s) = project.storyline.as_mut() {
                    s.text = rewrite_all(&s.text, edits);
                    storyline_touched = true;
                }
            }
            TextField::ImagePrompt(i) => {
                if let Some(s) = project.scene_mut(i) {
                    s.image_prompt = rewrite_all(&s.image_prompt, edits);
                }
            }
            TextField::Narration(i) => {
                if let Some(s) = project.scene_mut(i) {
                    s.narration = rewrite_all(&s.narration, edits);
                }
            }
        }
    }

    let after = build_graph(&project).dirty_set(changed)?;
    let dirty: BTreeSet<u8> = before.scenes.union(&after.scenes).copied().collect();
    refresh_scene_links(&mut project, dirty.iter().copied());
    let mut images_invalidated = BTreeSet::new();
    for i in &dirty {
        if let Some(scene) = project.scene_mut(*i) {
            scene.stale = true;
            if scene.image.is_some() {
                images_invalidated.insert(*i);
            }
        }
    }
    let reassembled_prompts = render_prompts(prompts, &project, &dirty)?;
    Ok((
        project,
        PropagationResult {
            dirty_scenes: dirty,
            reassembled_prompts,
            images_invalidated,
            storyline_touched,
        },
    ))
}

fn rewrite_all(text: &str, edits: &[(Span, String)]) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut sorted: Vec<&(Span, String)> = edits.iter().collect();
    sorted.sort_by_key(|(s, _)| *s);
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (span, replacement) in sorted {
        out.extend(&chars[cursor..span.start]);
        out.push_str(replacement);
        cursor = span.end;
    }
    out.extend(&chars[cursor..]);
    out
}

fn commit(
    old: &StoryProject,
    mut new: StoryProject,
    kind: RevisionKind,
    target: ComponentRef,
    instruction: &str,
    propagation: PropagationResult,
    clock: &dyn Clock,
) -> (StoryProject, Revision) {
    let (before, after) = diff(old, &new, &target);
    let revision = Revision {
        id: old.next_revision_id(),
        kind,
        target,
        instruction: instruction.to_string(),
        before,
        after,
        propagation,
        timestamp: clock.now(),
    };
    new.revisions.push(revision.clone());
    (new, revision)
}

fn require_generated(project: &StoryProject) -> Result<(), RevisionError> {
    if project.status == ProjectStatus::Generated {
        Ok(())
    } else {
        Err(RevisionError::NotGenerated)
    }
}

fn require_scene(project: &StoryProject, index: u8) -> Result<&Scene, RevisionError> {
    if !(1..=SCENE_COUNT as u8).contains(&index) {
        return Err(RevisionError::SceneOutOfRange(index));
    }
    project
        .scene(index)
        .ok_or_else(|| RevisionError::UnknownComponent(format!("scene-{index}")))
}

fn persona_out(p: &Persona) -> PersonaOut {
    PersonaOut {
        name: p.name.clone(),
        age: p.age.clone(),
        clothing: p.clothing.clone(),
        skin: p.skin.clone(),
        hair: p.hair.clone(),
        extra: p.extra.clone(),
    }
}

fn ensure_unique_name(project: &StoryProject, id: &EntityId, name: &str) -> Result<(), RevisionError> {
    let folded = link::fold_str(name.trim());
    if let Some(other) = project
        .entities()
        .find(|e| e.id() != id && link::fold_str(e.name().trim()) == folded)
    {
        return Err(RevisionError::NameCollision {
            name: name.to_string(),
            existing: other.id().clone(),
        });
    }
    Ok(())
}

fn parse_tones(labels: Vec<String>) -> Vec<Tone> {
    labels
        .into_iter()
        .map(|l| Tone::new(l).expect("schema-checked tone"))
        .collect()
}

/// Apply a chat instruction to one component and propagate the result.
pub fn revise(
    project: &StoryProject,
    target: &ComponentRef,
    instruction: &str,
    ctx: &EditContext<'_>,
) -> Result<Applied, RevisionError> {
    require_generated(project)?;
    if instruction.trim().is_empty() {
        return Err(RevisionError::EmptyInstruction);
    }

    let (subject, component_json, schema) = match target {
        ComponentRef::Storyline => {
            let s = project
                .storyline
                .as_ref()
                .ok_or_else(|| RevisionError::UnknownComponent("storyline".into()))?;
            let tones: Vec<&str> = s.tones.iter().map(Tone::as_str).collect();
            (
                RevisionSubject::Storyline,
                json!({ "storyline": s.text, "tones": tones }),
                SchemaId::RevisedStoryline,
            )
        }
        ComponentRef::Entity(id) => match project.entity(id) {
            Some(EntityView::Persona(p)) => (
                RevisionSubject::Persona,
                serde_json::to_value(persona_out(p)).expect("persona serializes"),
                SchemaId::RevisedPersona,
            ),
            Some(EntityView::Location(l)) => (
                RevisionSubject::Location,
                json!({ "name": l.name, "description": l.description }),
                SchemaId::RevisedLocation,
            ),
            None => return Err(RevisionError::UnknownComponent(id.to_string())),
        },
        ComponentRef::Scene { index, field } => {
            let scene = require_scene(project, *index)?;
            match field {
                Some(SceneField::ImagePrompt) => (
                    RevisionSubject::ImagePrompt,
                    json!({ "text": scene.image_prompt }),
                    SchemaId::RevisedSceneText,
                ),
                Some(SceneField::Narration) => (
                    RevisionSubject::Narration,
                    json!({ "text": scene.narration }),
                    SchemaId::RevisedSceneText,
                ),
                None => return Err(RevisionError::NotRevisable(target.clone())),
            }
        }
        ComponentRef::Storyboard => return Err(RevisionError::NotRevisable(target.clone())),
    };

    let prompt = ctx.prompts.revision_prompt(
        subject,
        &serde_json::to_string(&component_json).expect("component serializes"),
        instruction,
        project.tones(),
    )?;
    let request = ProviderRequest::text(prompt, OutputSpec::from(schema)).with_budget(ctx.budget);
    let response = generate(&request, ctx.provider)?;

    let mut next = project.clone();
    let propagation = match target {
        ComponentRef::Storyline => {
            let out: RevisedStorylineOut = response.parse();
            let revised = Storyline {
                text: out.storyline,
                tones: parse_tones(out.tones),
            };
            if next.storyline.as_ref() != Some(&revised) {
                next.storyline = Some(revised);
                for scene in &mut next.scenes {
                    scene.possibly_inconsistent = true;
                }
            }
            PropagationResult {
                storyline_touched: project.storyline != next.storyline,
                ..Default::default()
            }
        }
        ComponentRef::Entity(id) => {
            match id.kind() {
                EntityKind::Persona => {
                    let out: PersonaOut = response.parse();
                    ensure_unique_name(project, id, &out.name)?;
                    let slot = next.personas.iter_mut().find(|p| &p.id == id).expect("exists");
                    *slot = Persona {
                        id: id.clone(),
                        name: out.name.trim().to_string(),
                        age: out.age,
                        clothing: out.clothing,
                        skin: out.skin,
                        hair: out.hair,
                        extra: out.extra.filter(|e| !e.trim().is_empty()),
                    };
                }
                EntityKind::Location => {
                    let out: LocationOut = response.parse();
                    ensure_unique_name(project, id, &out.name)?;
                    let slot = next.locations.iter_mut().find(|l| &l.id == id).expect("exists");
                    *slot = Location {
                        id: id.clone(),
                        name: out.name.trim().to_string(),
                        description: out.description,
                    };
                }
            }
            let changed: BTreeSet<EntityId> = if next.entity(id) != project.entity(id) {
                [id.clone()].into()
            } else {
                BTreeSet::new()
            };
            let (propagated, result) = propagate(ctx.prompts, project, next, &changed)?;
            next = propagated;
            result
        }
        ComponentRef::Scene { index, field } => {
            let out: RevisedSceneTextOut = response.parse();
            let scene = next.scene_mut(*index).expect("checked above");
            let changed = match field {
                Some(SceneField::ImagePrompt) if scene.image_prompt != out.text => {
                    scene.image_prompt = out.text;
                    scene.stale = true;
                    true
                }
                Some(SceneField::Narration) if scene.narration != out.text => {
                    scene.narration = out.text;
                    true
                }
                _ => false,
            };
            if changed {
                let had_image = scene.image.is_some();
                refresh_scene_links(&mut next, [*index]);
                let dirty: BTreeSet<u8> = [*index].into();
                let images_invalidated = if *field == Some(SceneField::ImagePrompt) && had_image {
                    dirty.clone()
                } else {
                    BTreeSet::new()
                };
                PropagationResult {
                    reassembled_prompts: render_prompts(ctx.prompts, &next, &dirty)?,
                    dirty_scenes: dirty,
                    images_invalidated,
                    storyline_touched: false,
                }
            } else {
                PropagationResult::default()
            }
        }
        ComponentRef::Storyboard => unreachable!("rejected above"),
    };

    check_valid(&next)?;
    let (project, revision) = commit(
        project,
        next,
        RevisionKind::Edit,
        target.clone(),
        instruction,
        propagation,
        ctx.clock,
    );
    Ok(Applied {
        project,
        revision,
        assets: Vec::new(),
    })
}

/// Render one scene's current meta-prompt into a new image (and narration).
fn render_scene(
    project: &StoryProject,
    index: u8,
    ctx: &EditContext<'_>,
) -> Result<(Scene, String, GeneratedImage), RevisionError> {
    let graph = build_graph(project);
    let scene = project.scene(index).expect("caller checked");
    let prompt = ctx.prompts.scene_prompt(scene, project, &graph)?;
    let request = ProviderRequest::text(prompt.clone(), SchemaId::SceneRender)
        .with_image()
        .with_budget(ctx.budget);
    let response = generate(&request, ctx.provider)?;
    let out: SceneRenderOut = response.parse();
    let image = response.image.expect("image modality checked by generate");
    let mut updated = scene.clone();
    if let Some(n) = out.narration {
        updated.narration = n;
    }
    updated.image = Some(image.asset.clone());
    updated.stale = false;
    updated.possibly_inconsistent = false;
    updated.links = link::scene_links(&updated, &entities(project));
    Ok((updated, prompt, image))
}

/// Render several scenes concurrently; results come back in index order.
pub(crate) fn render_scenes(
    project: &StoryProject,
    indices: &[u8],
    ctx: &EditContext<'_>,
) -> Result<Vec<(Scene, String, GeneratedImage)>, RevisionError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = indices
            .iter()
            .map(|&i| scope.spawn(move || render_scene(project, i, ctx)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scene render thread panicked"))
            .collect()
    })
}

fn regenerate(
    project: &StoryProject,
    indices: &[u8],
    target: ComponentRef,
    ctx: &EditContext<'_>,
) -> Result<Applied, RevisionError> {
    let rendered = render_scenes(project, indices, ctx)?;
    let mut next = project.clone();
    let mut propagation = PropagationResult::default();
    let mut assets = Vec::new();
    for (scene, prompt, image) in rendered {
        propagation.dirty_scenes.insert(scene.index);
        propagation.reassembled_prompts.insert(scene.index, prompt);
        *next.scene_mut(scene.index).expect("exists") = scene.clone();
        assets.push(image);
    }
    check_valid(&next)?;
    let (project, revision) = commit(
        project,
        next,
        RevisionKind::Regenerate,
        target,
        "",
        propagation,
        ctx.clock,
    );
    Ok(Applied {
        project,
        revision,
        assets,
    })
}

/// Re-render one scene from its current meta-prompt. Allowed whether or not
/// the scene is stale.
pub fn regenerate_scene(project: &StoryProject, index: u8, ctx: &EditContext<'_>) -> Result<Applied, RevisionError> {
    require_generated(project)?;
    require_scene(project, index)?;
    regenerate(project, &[index], ComponentRef::Scene { index, field: None }, ctx)
}

/// Re-render every stale scene as one revision. `None` when nothing is stale.
pub fn regenerate_stale(project: &StoryProject, ctx: &EditContext<'_>) -> Result<Option<Applied>, RevisionError> {
    require_generated(project)?;
    let stale: Vec<u8> = project.scenes.iter().filter(|s| s.stale).map(|s| s.index).collect();
    if stale.is_empty() {
        return Ok(None);
    }
    regenerate(project, &stale, ComponentRef::Storyboard, ctx).map(Some)
}

/// The most recent revision that has not been undone yet.
pub fn undo_candidate(project: &StoryProject) -> Option<&Revision> {
    let undone: BTreeSet<u64> = project
        .revisions
        .iter()
        .filter_map(|r| match r.kind {
            RevisionKind::Undo { reverts } => Some(reverts),
            _ => None,
        })
        .collect();
    project
        .revisions
        .iter()
        .rev()
        .find(|r| !matches!(r.kind, RevisionKind::Undo { .. }) && !undone.contains(&r.id))
}

/// Restore the before-snapshot of the latest live revision, including every
/// scene its propagation touched, and log an undo marker.
pub fn undo(project: &StoryProject, prompts: &PromptEngine, clock: &dyn Clock) -> Result<Applied, RevisionError> {
    let latest = undo_candidate(project).ok_or(RevisionError::NothingToUndo)?;
    let reverts = latest.id;
    let target = latest.target.clone();
    let restore = latest.before.clone();
    let touched: BTreeSet<u8> = latest.before.scenes.iter().map(|s| s.index).collect();

    let mut next = project.clone();
    let current = restore.read_matching(project);
    restore.apply_to(&mut next);
    let propagation = PropagationResult {
        reassembled_prompts: render_prompts(prompts, &next, &touched)?,
        dirty_scenes: touched,
        images_invalidated: BTreeSet::new(),
        storyline_touched: restore.storyline.is_some() && current.storyline != restore.storyline,
    };
    let revision = Revision {
        id: project.next_revision_id(),
        kind: RevisionKind::Undo { reverts },
        target,
        instruction: String::new(),
        before: current,
        after: restore,
        propagation,
        timestamp: clock.now(),
    };
    next.revisions.push(revision.clone());
    Ok(Applied {
        project: next,
        revision,
        assets: Vec::new(),
    })
}

/// Rebuild a project by applying every revision's after-snapshot, in order,
/// to `initial`.
pub fn replay_history(initial: &StoryProject, revisions: &[Revision]) -> StoryProject {
    let mut project = initial.clone();
    for r in revisions {
        r.after.apply_to(&mut project);
        project.revisions.push(r.clone());
    }
    project
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::genai::mock_provider;

    #[test]
    fn component_refs_round_trip() {
        for s in [
            "storyline",
            "storyboard",
            "persona-1",
            "location-2",
            "scene-3",
            "scene-3.image_prompt",
            "scene-6.narration",
        ] {
            let r: ComponentRef = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
        assert!("scene-x".parse::<ComponentRef>().is_err());
        assert!("scene-1.tones".parse::<ComponentRef>().is_err());
        assert!("dragon-1".parse::<ComponentRef>().is_err());
    }

    #[test]
    fn empty_changed_set_is_a_no_op() {
        let p = fixtures::race_project();
        let prompts = PromptEngine::default();
        let (out, result) = propagate(&prompts, &p, p.clone(), &BTreeSet::new()).unwrap();
        assert_eq!(result, PropagationResult::default());
        assert_eq!(out.to_canonical_json(), p.to_canonical_json());
    }

    #[test]
    fn rename_rewrites_every_mention() {
        let p = fixtures::race_project();
        let prompts = PromptEngine::default();
        let blaze = p.personas[0].id.clone();
        let mut edited = p.clone();
        edited.personas[0].name = "Dash".into();
        let (out, result) = propagate(&prompts, &p, edited, &[blaze.clone()].into()).unwrap();

        let expected: BTreeSet<u8> = p
            .scenes
            .iter()
            .filter(|s| {
                !link::match_names(&s.image_prompt, &["Blaze"]).is_empty()
                    || !link::match_names(&s.narration, &["Blaze"]).is_empty()
            })
            .map(|s| s.index)
            .collect();
        assert_eq!(result.dirty_scenes, expected);
        assert!(result.storyline_touched);
        for s in &out.scenes {
            assert!(link::match_names(&s.image_prompt, &["Blaze"]).is_empty());
            assert!(link::match_names(&s.narration, &["Blaze"]).is_empty());
            let old = p.scene(s.index).unwrap();
            let rewritten = old.image_prompt.replace("Blaze", "Dash");
            assert_eq!(s.image_prompt, rewritten);
        }
        assert!(out.storyline.unwrap().text.contains("Dash"));
        assert!(result.images_invalidated.is_subset(&result.dirty_scenes));
    }

    #[test]
    fn regenerate_rejects_out_of_range_index() {
        let p = fixtures::race_project();
        let provider = mock_provider(1);
        let prompts = PromptEngine::default();
        let clock = FixedClock::epoch();
        let ctx = EditContext {
            provider: &provider,
            prompts: &prompts,
            clock: &clock,
            budget: 3,
        };
        assert!(matches!(
            regenerate_scene(&p, 7, &ctx),
            Err(RevisionError::SceneOutOfRange(7))
        ));
        assert!(matches!(
            regenerate_scene(&p, 0, &ctx),
            Err(RevisionError::SceneOutOfRange(0))
        ));
    }

    #[test]
    fn undo_with_empty_history_fails() {
        let p = fixtures::race_project();
        let err = undo(&p, &PromptEngine::default(), &FixedClock::epoch()).unwrap_err();
        assert!(matches!(err, RevisionError::NothingToUndo));
    }
}
