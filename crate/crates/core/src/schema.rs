//! Structured-output schemas every provider reply is checked against.
//!
//! Nothing from a provider reaches a [`StoryProject`](crate::model::StoryProject)
//! without passing [`check`] for the schema the request named.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::link;
use crate::model::{Tone, MAX_ENTITIES, MIN_ENTITIES, SCENE_COUNT};

pub const IDEA_COUNT: usize = 4;
pub const MAX_TONES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchemaId {
    #[serde(rename = "ideas.v1")]
    Ideas,
    #[serde(rename = "storyline.v1")]
    Storyline,
    #[serde(rename = "tones.v1")]
    Tones,
    #[serde(rename = "personas.v1")]
    Personas,
    #[serde(rename = "locations.v1")]
    Locations,
    #[serde(rename = "scenes.v1")]
    Scenes,
    #[serde(rename = "scene_render.v1")]
    SceneRender,
    #[serde(rename = "revised_storyline.v1")]
    RevisedStoryline,
    #[serde(rename = "revised_persona.v1")]
    RevisedPersona,
    #[serde(rename = "revised_location.v1")]
    RevisedLocation,
    #[serde(rename = "revised_scene_text.v1")]
    RevisedSceneText,
}

impl SchemaId {
    pub const ALL: [SchemaId; 11] = [
        SchemaId::Ideas,
        SchemaId::Storyline,
        SchemaId::Tones,
        SchemaId::Personas,
        SchemaId::Locations,
        SchemaId::Scenes,
        SchemaId::SceneRender,
        SchemaId::RevisedStoryline,
        SchemaId::RevisedPersona,
        SchemaId::RevisedLocation,
        SchemaId::RevisedSceneText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::Ideas => "ideas.v1",
            SchemaId::Storyline => "storyline.v1",
            SchemaId::Tones => "tones.v1",
            SchemaId::Personas => "personas.v1",
            SchemaId::Locations => "locations.v1",
            SchemaId::Scenes => "scenes.v1",
            SchemaId::SceneRender => "scene_render.v1",
            SchemaId::RevisedStoryline => "revised_storyline.v1",
            SchemaId::RevisedPersona => "revised_persona.v1",
            SchemaId::RevisedLocation => "revised_location.v1",
            SchemaId::RevisedSceneText => "revised_scene_text.v1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.as_str() == s)
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A schema plus the request-specific facts a reply must agree with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub id: SchemaId,
    /// For persona / location lists: the exact names that must come back.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expected_names: Vec<String>,
}

impl From<SchemaId> for OutputSpec {
    fn from(id: SchemaId) -> Self {
        Self {
            id,
            expected_names: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeasOut {
    pub ideas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorylineOut {
    pub storyline: String,
    pub characters: Vec<String>,
    pub locations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TonesOut {
    pub tones: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaOut {
    pub name: String,
    pub age: String,
    pub clothing: String,
    pub skin: String,
    pub hair: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonasOut {
    pub personas: Vec<PersonaOut>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationOut {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationsOut {
    pub locations: Vec<LocationOut>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneOut {
    pub image_prompt: String,
    pub narration: String,
    #[serde(default)]
    pub tones: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenesOut {
    pub scenes: Vec<SceneOut>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRenderOut {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narration: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisedStorylineOut {
    pub storyline: String,
    pub tones: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisedSceneTextOut {
    pub text: String,
}

/// Strip an optional Markdown code fence around a JSON reply.
fn unfence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn typed<T: DeserializeOwned>(value: &Value, errors: &mut Vec<String>) -> Option<T> {
    match serde_json::from_value(value.clone()) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("reply does not match the required shape: {e}"));
            None
        }
    }
}

fn non_empty(errors: &mut Vec<String>, what: &str, value: &str) {
    if value.trim().is_empty() {
        errors.push(format!("{what} must not be empty"));
    }
}

fn tones(errors: &mut Vec<String>, what: &str, labels: &[String], min: usize) {
    if labels.len() < min || labels.len() > MAX_TONES {
        errors.push(format!("{what} needs {min}-{MAX_TONES} tones, got {}", labels.len()));
    }
    for label in labels {
        if let Err(e) = Tone::new(label.clone()) {
            errors.push(format!("{what}: {e}"));
        }
    }
}

fn name_list(errors: &mut Vec<String>, what: &str, names: &[String]) {
    if !(MIN_ENTITIES..=MAX_ENTITIES).contains(&names.len()) {
        errors.push(format!(
            "expected {MIN_ENTITIES}-{MAX_ENTITIES} {what}, got {}",
            names.len()
        ));
    }
    for n in names {
        non_empty(errors, &format!("{what} name"), n);
    }
}

fn same_names(errors: &mut Vec<String>, what: &str, got: &[&str], expected: &[String]) {
    let mut g: Vec<String> = got.iter().map(|n| link::fold_str(n.trim())).collect();
    let mut e: Vec<String> = expected.iter().map(|n| link::fold_str(n.trim())).collect();
    g.sort();
    e.sort();
    if g != e {
        errors.push(format!("{what} must be exactly {:?}, got {:?}", expected, got));
    }
}

/// Validate `raw` against `spec`, returning the parsed JSON on success and
/// every problem found otherwise.
pub fn check(spec: &OutputSpec, raw: &str) -> Result<Value, Vec<String>> {
    let value: Value = match serde_json::from_str(unfence(raw)) {
        Ok(v) => v,
        Err(e) => return Err(vec![format!("reply is not valid JSON: {e}")]),
    };
    if !value.is_object() {
        return Err(vec!["reply must be a JSON object".to_string()]);
    }
    let mut errors = Vec::new();
    match spec.id {
        SchemaId::Ideas => {
            if let Some(out) = typed::<IdeasOut>(&value, &mut errors) {
                if out.ideas.len() != IDEA_COUNT {
                    errors.push(format!("expected {IDEA_COUNT} ideas, got {}", out.ideas.len()));
                }
                for idea in &out.ideas {
                    non_empty(&mut errors, "idea", idea);
                }
            }
        }
        SchemaId::Storyline => {
            if let Some(out) = typed::<StorylineOut>(&value, &mut errors) {
                non_empty(&mut errors, "storyline", &out.storyline);
                name_list(&mut errors, "characters", &out.characters);
                name_list(&mut errors, "locations", &out.locations);
                let all: Vec<&str> = out
                    .characters
                    .iter()
                    .chain(&out.locations)
                    .map(String::as_str)
                    .collect();
                let mut folded: Vec<String> = all.iter().map(|n| link::fold_str(n.trim())).collect();
                folded.sort();
                folded.dedup();
                if folded.len() != all.len() {
                    errors.push("character and location names must all be distinct".into());
                }
                let found = link::match_names(&out.storyline, &all);
                for (pos, name) in all.iter().enumerate() {
                    if !name.trim().is_empty() && !found.iter().any(|(_, p)| *p == pos) {
                        errors.push(format!("storyline never mentions `{name}`"));
                    }
                }
            }
        }
        SchemaId::Tones => {
            if let Some(out) = typed::<TonesOut>(&value, &mut errors) {
                tones(&mut errors, "story", &out.tones, 1);
            }
        }
        SchemaId::Personas => {
            if let Some(out) = typed::<PersonasOut>(&value, &mut errors) {
                for p in &out.personas {
                    check_persona(&mut errors, p);
                }
                let names: Vec<&str> = out.personas.iter().map(|p| p.name.as_str()).collect();
                same_names(&mut errors, "persona names", &names, &spec.expected_names);
            }
        }
        SchemaId::Locations => {
            if let Some(out) = typed::<LocationsOut>(&value, &mut errors) {
                for l in &out.locations {
                    check_location(&mut errors, l);
                }
                let names: Vec<&str> = out.locations.iter().map(|l| l.name.as_str()).collect();
                same_names(&mut errors, "location names", &names, &spec.expected_names);
            }
        }
        SchemaId::Scenes => {
            if let Some(out) = typed::<ScenesOut>(&value, &mut errors) {
                if out.scenes.len() != SCENE_COUNT {
                    errors.push(format!(
                        "expected exactly {SCENE_COUNT} scenes, got {}",
                        out.scenes.len()
                    ));
                }
                for (i, s) in out.scenes.iter().enumerate() {
                    non_empty(&mut errors, &format!("scene {} image_prompt", i + 1), &s.image_prompt);
                    non_empty(&mut errors, &format!("scene {} narration", i + 1), &s.narration);
                    tones(&mut errors, &format!("scene {}", i + 1), &s.tones, 0);
                }
            }
        }
        SchemaId::SceneRender => {
            if let Some(out) = typed::<SceneRenderOut>(&value, &mut errors) {
                if let Some(n) = &out.narration {
                    non_empty(&mut errors, "narration", n);
                }
            }
        }
        SchemaId::RevisedStoryline => {
            if let Some(out) = typed::<RevisedStorylineOut>(&value, &mut errors) {
                non_empty(&mut errors, "storyline", &out.storyline);
                tones(&mut errors, "story", &out.tones, 1);
            }
        }
        SchemaId::RevisedPersona => {
            if let Some(p) = typed::<PersonaOut>(&value, &mut errors) {
                check_persona(&mut errors, &p);
            }
        }
        SchemaId::RevisedLocation => {
            if let Some(l) = typed::<LocationOut>(&value, &mut errors) {
                check_location(&mut errors, &l);
            }
        }
        SchemaId::RevisedSceneText => {
            if let Some(out) = typed::<RevisedSceneTextOut>(&value, &mut errors) {
                non_empty(&mut errors, "text", &out.text);
            }
        }
    }
    if errors.is_empty() {
        Ok(value)
    } else {
        Err(errors)
    }
}

fn check_persona(errors: &mut Vec<String>, p: &PersonaOut) {
    non_empty(errors, "persona name", &p.name);
    for (field, value) in [
        ("age", &p.age),
        ("clothing", &p.clothing),
        ("skin", &p.skin),
        ("hair", &p.hair),
    ] {
        non_empty(errors, &format!("persona `{}` {field}", p.name), value);
    }
}

fn check_location(errors: &mut Vec<String>, l: &LocationOut) {
    non_empty(errors, "location name", &l.name);
    non_empty(errors, &format!("location `{}` description", l.name), &l.description);
}
