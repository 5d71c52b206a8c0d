//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use storyweave_core::model::{EntityId, EntityView, Scene, StoryProject};

fn same_char(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

fn wordy(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// Every occurrence of every name, then the longest-first, earliest-first
/// non-overlapping selection. Returns `(start, end, name index)` in char
/// offsets, sorted by start.
pub fn oracle_refs(text: &str, names: &[&str]) -> Vec<(usize, usize, usize)> {
    let t: Vec<char> = text.chars().collect();
    let mut all: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..t.len() {
        for j in i + 1..=t.len() {
            for (k, name) in names.iter().enumerate() {
                let n: Vec<char> = name.chars().collect();
                if n.len() != j - i {
                    continue;
                }
                if !n.iter().zip(&t[i..j]).all(|(a, b)| same_char(*a, *b)) {
                    continue;
                }
                let left_ok = !wordy(n[0]) || i == 0 || !wordy(t[i - 1]);
                let right_ok = !wordy(n[n.len() - 1]) || j == t.len() || !wordy(t[j]);
                if left_ok && right_ok {
                    all.push((i, j, k));
                }
            }
        }
    }
    let mut chosen: Vec<(usize, usize, usize)> = Vec::new();
    while !all.is_empty() {
        let best = *all
            .iter()
            .min_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)))
            .unwrap();
        chosen.push(best);
        all.retain(|c| c.1 <= best.0 || c.0 >= best.1);
    }
    chosen.sort();
    chosen
}

pub fn names_of(project: &StoryProject) -> (Vec<String>, Vec<EntityId>) {
    project
        .entities()
        .map(|e| (e.name().to_string(), e.id().clone()))
        .unzip()
}

/// Entities a scene mentions, found by brute force.
pub fn oracle_scene_entities(project: &StoryProject, scene: &Scene) -> BTreeSet<EntityId> {
    let (names, ids) = names_of(project);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    [&scene.image_prompt, &scene.narration]
        .iter()
        .flat_map(|text| oracle_refs(text, &refs))
        .map(|(_, _, k)| ids[k].clone())
        .collect()
}

/// Scenes that mention `entity`, found by brute force.
pub fn oracle_scenes_mentioning(project: &StoryProject, entity: &EntityId) -> BTreeSet<u8> {
    project
        .scenes
        .iter()
        .filter(|s| oracle_scene_entities(project, s).contains(entity))
        .map(|s| s.index)
        .collect()
}

/// Expected serialized description: a JSON object with sorted keys holding
/// the id-free fields of the entity.
pub fn oracle_serialized(entity: EntityView<'_>) -> String {
    let mut m = Map::new();
    match entity {
        EntityView::Persona(p) => {
            m.insert("name".into(), Value::from(p.name.clone()));
            m.insert("age".into(), Value::from(p.age.clone()));
            m.insert("clothing".into(), Value::from(p.clothing.clone()));
            m.insert("skin".into(), Value::from(p.skin.clone()));
            m.insert("hair".into(), Value::from(p.hair.clone()));
            if let Some(x) = &p.extra {
                m.insert("extra".into(), Value::from(x.clone()));
            }
        }
        EntityView::Location(l) => {
            m.insert("name".into(), Value::from(l.name.clone()));
            m.insert("description".into(), Value::from(l.description.clone()));
        }
    }
    let mut keys: Vec<&String> = m.keys().collect();
    keys.sort();
    let body: Vec<String> = keys
        .iter()
        .map(|k| format!("{}:{}", Value::from(k.as_str()), m[k.as_str()]))
        .collect();
    format!("{{{}}}", body.join(","))
}

/// Names used for renames in tests; none is a word in the generated filler.
pub const RENAME_POOL: &[&str] = &[
    "Dash",
    "Rubik's cube",
    "Nova",
    "Old Pip",
    "Bridge",
    "Woodsman",
    "Marble",
    "Quill",
    "Zoë",
    "Ember Vale",
    "Pippa",
    "River",
    "Ash Grove",
];

/// A rename target that collides with no entity in `project`.
pub fn fresh_name(rng: &mut ChaCha8Rng, project: &StoryProject) -> String {
    loop {
        let name = *RENAME_POOL.choose(rng).unwrap();
        if !project
            .entities()
            .any(|e| e.name().to_lowercase() == name.to_lowercase())
        {
            return name.to_string();
        }
    }
}

/// A random mock-understood instruction for `entity`: a rename or an
/// attribute tweak.
pub fn random_entity_instruction(rng: &mut ChaCha8Rng, project: &StoryProject, entity: &EntityId) -> String {
    let name = project.entity(entity).unwrap().name().to_string();
    if rng.random_bool(0.5) {
        format!("rename {name} to {}", fresh_name(rng, project))
    } else {
        let extra = [
            "wears a blue cape",
            "looks older",
            "is covered in moss",
            "glows faintly",
        ];
        format!(
            "make it so the {} {}",
            if rng.random_bool(0.5) { "outfit" } else { "look" },
            extra.choose(rng).unwrap()
        )
    }
}

#[test]
fn oracle_sanity() {
    assert_eq!(
        oracle_refs("Woodsman met Woods", &["Woods", "Woodsman"]),
        [(0, 8, 1), (13, 18, 0)]
    );
    assert!(oracle_refs("", &["x"]).is_empty());
}
