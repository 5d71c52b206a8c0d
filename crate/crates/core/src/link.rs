//! Entity mention extraction and the entity → text dependency graph.
//!
//! Matching rule: case-insensitive, whole-word, non-overlapping. When two
//! candidate mentions overlap, the longer one wins; equal lengths go to the
//! earlier start. Offsets are in `char`s, not bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntityId, EntityView, Scene, StoryProject};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinkError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
}

/// Which text a reference points into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "field", content = "scene", rename_all = "snake_case")]
pub enum TextField {
    Storyline,
    ImagePrompt(u8),
    Narration(u8),
}

impl TextField {
    pub fn target(self) -> LinkTarget {
        match self {
            TextField::Storyline => LinkTarget::Storyline,
            TextField::ImagePrompt(i) | TextField::Narration(i) => LinkTarget::Scene(i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkTarget {
    Storyline,
    Scene(u8),
}

/// Half-open `char` offset range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub entity: EntityId,
    #[serde(flatten)]
    pub field: TextField,
    pub span: Span,
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Simple case folding that never changes the number of chars.
pub fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub fn fold_str(s: &str) -> String {
    s.chars().map(fold_char).collect()
}

/// All linkable mentions of `entities` in `text`, sorted by span start.
pub fn extract_refs(text: &str, field: TextField, entities: &[EntityView<'_>]) -> Vec<EntityRef> {
    let names: Vec<&str> = entities.iter().map(|e| e.name()).collect();
    match_names(text, &names)
        .into_iter()
        .map(|(span, pos)| EntityRef {
            entity: entities[pos].id().clone(),
            field,
            span,
        })
        .collect()
}

/// Mentions of `names` in `text` as `(span, index into names)`, sorted by
/// span start.
pub fn match_names(text: &str, names: &[&str]) -> Vec<(Span, usize)> {
    let hay: Vec<char> = text.chars().map(fold_char).collect();
    if hay.is_empty() {
        return Vec::new();
    }

    // (start, len, name position)
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (pos, name) in names.iter().enumerate() {
        let needle: Vec<char> = name.chars().map(fold_char).collect();
        if needle.is_empty() || needle.len() > hay.len() {
            continue;
        }
        let head_is_word = is_word_char(needle[0]);
        let tail_is_word = is_word_char(needle[needle.len() - 1]);
        for start in 0..=hay.len() - needle.len() {
            let end = start + needle.len();
            if hay[start..end] != needle[..] {
                continue;
            }
            if head_is_word && start > 0 && is_word_char(hay[start - 1]) {
                continue;
            }
            if tail_is_word && end < hay.len() && is_word_char(hay[end]) {
                continue;
            }
            candidates.push((start, needle.len(), pos));
        }
    }

    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)));
    let mut claimed = vec![false; hay.len()];
    let mut found = Vec::new();
    for (start, len, pos) in candidates {
        if claimed[start..start + len].iter().any(|&c| c) {
            continue;
        }
        claimed[start..start + len].iter_mut().for_each(|c| *c = true);
        found.push((
            Span {
                start,
                end: start + len,
            },
            pos,
        ));
    }
    found.sort_by_key(|(span, _)| span.start);
    found
}

/// Entities referenced by a scene, image prompt mentions first, then
/// narration, each entity once.
pub fn scene_links(scene: &Scene, entities: &[EntityView<'_>]) -> Vec<EntityId> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let fields = [
        (scene.image_prompt.as_str(), TextField::ImagePrompt(scene.index)),
        (scene.narration.as_str(), TextField::Narration(scene.index)),
    ];
    for (text, field) in fields {
        for r in extract_refs(text, field, entities) {
            if seen.insert(r.entity.clone()) {
                out.push(r.entity);
            }
        }
    }
    out
}

/// Replace each span of `text` with `replacement`. Spans must not overlap.
pub fn rewrite_spans(text: &str, spans: &[Span], replacement: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut sorted: Vec<Span> = spans.to_vec();
    sorted.sort();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for span in sorted {
        out.extend(&chars[cursor..span.start]);
        out.push_str(replacement);
        cursor = span.end;
    }
    out.extend(&chars[cursor..]);
    out
}

/// Substring of `text` covered by `span`.
pub fn span_text(text: &str, span: Span) -> String {
    text.chars().skip(span.start).take(span.len()).collect()
}

/// Scenes (and possibly the storyline) touched by a set of changed entities.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirtySet {
    pub scenes: BTreeSet<u8>,
    pub storyline: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkGraph {
    pub refs: Vec<EntityRef>,
    pub by_entity: BTreeMap<EntityId, BTreeSet<LinkTarget>>,
}

/// Rebuild the whole graph from the project's current texts.
pub fn build_graph(project: &StoryProject) -> LinkGraph {
    let entities: Vec<EntityView<'_>> = project.entities().collect();
    let mut refs = Vec::new();
    if let Some(storyline) = &project.storyline {
        refs.extend(extract_refs(&storyline.text, TextField::Storyline, &entities));
    }
    for scene in &project.scenes {
        refs.extend(extract_refs(
            &scene.image_prompt,
            TextField::ImagePrompt(scene.index),
            &entities,
        ));
        refs.extend(extract_refs(
            &scene.narration,
            TextField::Narration(scene.index),
            &entities,
        ));
    }
    LinkGraph::from_refs(refs, entities.iter().map(|e| e.id().clone()))
}

impl LinkGraph {
    /// `by_entity` is the projection of `refs`; every key in `entities` is
    /// present even when unreferenced.
    pub fn from_refs(refs: Vec<EntityRef>, entities: impl IntoIterator<Item = EntityId>) -> Self {
        let mut by_entity: BTreeMap<EntityId, BTreeSet<LinkTarget>> =
            entities.into_iter().map(|id| (id, BTreeSet::new())).collect();
        for r in &refs {
            by_entity.entry(r.entity.clone()).or_default().insert(r.field.target());
        }
        Self { refs, by_entity }
    }

    pub fn dirty_set(&self, changed: &BTreeSet<EntityId>) -> Result<DirtySet, LinkError> {
        let mut dirty = DirtySet::default();
        for id in changed {
            let targets = self
                .by_entity
                .get(id)
                .ok_or_else(|| LinkError::UnknownEntity(id.clone()))?;
            for target in targets {
                match target {
                    LinkTarget::Storyline => dirty.storyline = true,
                    LinkTarget::Scene(i) => {
                        dirty.scenes.insert(*i);
                    }
                }
            }
        }
        Ok(dirty)
    }

    pub fn refs_in(&self, field: TextField) -> impl Iterator<Item = &EntityRef> {
        self.refs.iter().filter(move |r| r.field == field)
    }

    pub fn refs_to<'a>(&'a self, id: &'a EntityId) -> impl Iterator<Item = &'a EntityRef> {
        self.refs.iter().filter(move |r| &r.entity == id)
    }

    /// Entities referenced by scene `index` in first-mention order.
    pub fn scene_entities(&self, index: u8) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = Vec::new();
        for field in [TextField::ImagePrompt(index), TextField::Narration(index)] {
            for r in self.refs_in(field) {
                if !out.contains(&r.entity) {
                    out.push(r.entity.clone());
                }
            }
        }
        out
    }
}
