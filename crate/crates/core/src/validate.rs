//! Project-wide validity rules. Violations are data; this never fails.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::link::{self, TextField};
use crate::model::{EntityKind, EntityView, ProjectStatus, StoryProject, MAX_ENTITIES, MIN_ENTITIES, SCENE_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
    pub component: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, rule: &str, component: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            rule: rule.to_string(),
            message: message.into(),
            component: component.into(),
        });
    }
}

pub fn scene_component(index: u8) -> String {
    format!("scene-{index}")
}

pub fn validate_project(project: &StoryProject) -> ValidationReport {
    let mut out = Collector(Vec::new());
    let generated = project.status == ProjectStatus::Generated;

    if project.seed.text.trim().is_empty() {
        out.push("seed.empty", "seed", "seed text is empty");
    }

    if !generated {
        if project.storyline.is_some()
            || !project.personas.is_empty()
            || !project.locations.is_empty()
            || !project.scenes.is_empty()
        {
            out.push(
                "project.ungenerated_has_components",
                "project",
                "ungenerated project must not carry generated components",
            );
        }
        return finish(out);
    }

    check_count(&mut out, "persona.count", "persona", project.personas.len());
    check_count(&mut out, "location.count", "location", project.locations.len());
    if project.scenes.len() != SCENE_COUNT {
        out.push(
            "scene.count",
            "project",
            format!("scene count {} is not {SCENE_COUNT}", project.scenes.len()),
        );
    }

    check_entities(&mut out, project);
    check_storyline(&mut out, project);
    check_scenes(&mut out, project);

    finish(out)
}

fn finish(out: Collector) -> ValidationReport {
    ValidationReport {
        ok: out.0.is_empty(),
        violations: out.0,
    }
}

fn check_count(out: &mut Collector, rule: &str, what: &str, n: usize) {
    if !(MIN_ENTITIES..=MAX_ENTITIES).contains(&n) {
        out.push(
            rule,
            "project",
            format!("{what} count out of range: {n} (allowed {MIN_ENTITIES}..={MAX_ENTITIES})"),
        );
    }
}

fn check_entities(out: &mut Collector, project: &StoryProject) {
    let mut ids = BTreeSet::new();
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    for p in &project.personas {
        if p.id.kind() != EntityKind::Persona {
            out.push("entity.kind_mismatch", p.id.as_str(), "persona carries a location id");
        }
        for (field, value) in [
            ("age", &p.age),
            ("clothing", &p.clothing),
            ("skin", &p.skin),
            ("hair", &p.hair),
        ] {
            if value.trim().is_empty() {
                out.push(
                    "persona.attribute_empty",
                    p.id.as_str(),
                    format!("persona `{}` has empty {field}", p.name),
                );
            }
        }
    }
    for l in &project.locations {
        if l.id.kind() != EntityKind::Location {
            out.push("entity.kind_mismatch", l.id.as_str(), "location carries a persona id");
        }
        if l.description.trim().is_empty() {
            out.push(
                "location.description_empty",
                l.id.as_str(),
                format!("location `{}` has no description", l.name),
            );
        }
    }
    for e in project.entities() {
        if !ids.insert(e.id().clone()) {
            out.push(
                "entity.id_duplicate",
                e.id().as_str(),
                format!("duplicate id {}", e.id()),
            );
        }
        let name = e.name().trim();
        if name.is_empty() {
            out.push("entity.name_empty", e.id().as_str(), "entity name is empty");
            continue;
        }
        let key = link::fold_str(name);
        if let Some(first) = names.get(&key) {
            out.push(
                "entity.name_duplicate",
                e.id().as_str(),
                format!("name `{name}` collides with {first}"),
            );
        } else {
            names.insert(key, e.id().to_string());
        }
    }
}

fn check_storyline(out: &mut Collector, project: &StoryProject) {
    let Some(storyline) = &project.storyline else {
        out.push("storyline.missing", "storyline", "generated project has no storyline");
        return;
    };
    if storyline.text.trim().is_empty() {
        out.push("storyline.empty", "storyline", "storyline text is empty");
    }
    if storyline.tones.is_empty() {
        out.push("storyline.tones_empty", "storyline", "storyline has no tones");
    }
    let entities: Vec<EntityView<'_>> = project.entities().collect();
    let refs = link::extract_refs(&storyline.text, TextField::Storyline, &entities);
    for e in &entities {
        if !refs.iter().any(|r| r.entity == *e.id()) {
            out.push(
                "storyline.entity_unmentioned",
                "storyline",
                format!("storyline never mentions `{}`", e.name()),
            );
        }
    }
}

fn check_scenes(out: &mut Collector, project: &StoryProject) {
    let mut seen = BTreeSet::new();
    for scene in &project.scenes {
        let component = scene_component(scene.index);
        if !(1..=SCENE_COUNT as u8).contains(&scene.index) || !seen.insert(scene.index) {
            out.push(
                "scene.index",
                component.clone(),
                format!("scene index {} is out of range or repeated", scene.index),
            );
        }
        if scene.image_prompt.trim().is_empty() {
            out.push("scene.image_prompt_empty", component.clone(), "empty image prompt");
        }
        if scene.narration.trim().is_empty() {
            out.push("scene.narration_empty", component.clone(), "empty narration");
        }
        for id in &scene.links {
            if project.entity(id).is_none() {
                out.push(
                    "scene.unresolved_entity",
                    component.clone(),
                    format!("scene {} links to {id}, which does not exist", scene.index),
                );
            }
        }
        let entities: Vec<EntityView<'_>> = project.entities().collect();
        let fresh = link::scene_links(scene, &entities);
        if fresh != scene.links {
            out.push(
                "scene.links_out_of_sync",
                component,
                format!(
                    "scene {} links {:?} but its text mentions {:?}",
                    scene.index,
                    scene.links.iter().map(|i| i.as_str()).collect::<Vec<_>>(),
                    fresh.iter().map(|i| i.as_str()).collect::<Vec<_>>(),
                ),
            );
        }
    }
    if seen.len() == project.scenes.len()
        && project.scenes.len() == SCENE_COUNT
        && seen != (1..=SCENE_COUNT as u8).collect()
    {
        out.push("scene.index", "project", "scene indices are not contiguous 1..=6");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{new_project, EntityId, Persona, SeedIdea};

    #[test]
    fn race_fixture_is_valid() {
        let p = fixtures::race_project();
        let report = validate_project(&p);
        assert!(report.ok, "{:#?}", report.violations);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn ungenerated_project_is_valid() {
        let p = new_project(SeedIdea::user("a seed").unwrap());
        assert!(validate_project(&p).ok);
    }

    #[test]
    fn four_personas_out_of_range() {
        let mut p = fixtures::race_project();
        for n in 3..=4 {
            p.personas.push(Persona {
                id: EntityId::persona(n),
                name: format!("Extra{n}"),
                age: "a".into(),
                clothing: "b".into(),
                skin: "c".into(),
                hair: "d".into(),
                extra: None,
            });
        }
        let report = validate_project(&p);
        assert!(!report.ok);
        let v = report.violations.iter().find(|v| v.rule == "persona.count").unwrap();
        assert!(v.message.contains("persona count out of range"));
    }

    #[test]
    fn deleted_entity_is_reported_against_its_scene() {
        let mut p = fixtures::race_project();
        let grumble = EntityId::persona(3);
        p.personas.push(Persona {
            id: grumble.clone(),
            name: "Grumble".into(),
            age: "old".into(),
            clothing: "cloak".into(),
            skin: "grey".into(),
            hair: "wild".into(),
            extra: None,
        });
        {
            let s3 = p.scene_mut(3).unwrap();
            s3.image_prompt.push_str(" Grumble watches from a stump.");
        }
        p.storyline.as_mut().unwrap().text.push_str(" Grumble grumbles.");
        fixtures::refresh_links(&mut p);
        assert!(validate_project(&p).ok);

        p.personas.retain(|x| x.id != grumble);
        let report = validate_project(&p);
        assert!(!report.ok);
        assert!(report
            .violations
            .iter()
            .any(|v| v.rule == "scene.unresolved_entity" && v.component == "scene-3"));
    }

    #[test]
    fn reports_every_violation() {
        let mut p = fixtures::race_project();
        p.personas[1].name = p.personas[0].name.to_uppercase();
        p.locations[0].description.clear();
        p.scenes.pop();
        let report = validate_project(&p);
        for rule in ["entity.name_duplicate", "location.description_empty", "scene.count"] {
            assert!(report.has_rule(rule), "missing {rule}: {:#?}", report.violations);
        }
    }

    #[test]
    fn validation_is_pure() {
        let p = fixtures::race_project();
        let before = p.clone();
        let a = validate_project(&p);
        let b = validate_project(&p);
        assert_eq!(a, b);
        assert_eq!(p, before);
    }
}
