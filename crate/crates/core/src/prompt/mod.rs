//! Prompt assembly: the five-step initial-generation plan, per-scene
//! meta-prompts, and component-scoped revision prompts.
//!
//! Template text lives in versioned files under `templates/v<N>/`. The
//! built-in set is compiled in; [`TemplateSet::load_dir`] reads an override
//! directory with the same file names.

mod meta;
mod plan;
mod template;

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

pub use meta::{assemble_scene_prompt, entity_block, render, serialize_entity, EntityBlock, MetaPrompt};
pub use plan::{GenerationPlan, StepKind, StepSpec};
pub use template::{Segment, Template, TemplateError};

use crate::link::LinkGraph;
use crate::model::{EntityId, Scene, SeedIdea, StoryProject, Tone};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("scene {scene} references {entity}, which is not in the project")]
    UnknownEntity { scene: u8, entity: EntityId },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("template set is missing `{0}`")]
    MissingTemplate(String),
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
}

pub const TEMPLATE_NAMES: [&str; 8] = [
    "ideas",
    "storyline",
    "tones",
    "personas",
    "locations",
    "scenes",
    "scene_task",
    "revise",
];

const BUILTIN_V1: [(&str, &str); 8] = [
    ("ideas", include_str!("../../templates/v1/ideas.tmpl")),
    ("storyline", include_str!("../../templates/v1/storyline.tmpl")),
    ("tones", include_str!("../../templates/v1/tones.tmpl")),
    ("personas", include_str!("../../templates/v1/personas.tmpl")),
    ("locations", include_str!("../../templates/v1/locations.tmpl")),
    ("scenes", include_str!("../../templates/v1/scenes.tmpl")),
    ("scene_task", include_str!("../../templates/v1/scene_task.tmpl")),
    ("revise", include_str!("../../templates/v1/revise.tmpl")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: u32,
    templates: BTreeMap<String, Template>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN_V1
            .iter()
            .map(|(name, src)| {
                let t = Template::parse(name, src).expect("built-in template parses");
                (name.to_string(), t)
            })
            .collect();
        Self { version: 1, templates }
    }

    /// Load `<name>.tmpl` for every template name from `dir`. The version
    /// is read from a `version` file when present, else taken from a
    /// trailing `v<N>` in the directory name, else 1.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.tmpl"));
            if !path.exists() {
                return Err(PromptError::MissingTemplate(name.to_string()));
            }
            let src = std::fs::read_to_string(&path)?;
            templates.insert(name.to_string(), Template::parse(name, &src)?);
        }
        let version = std::fs::read_to_string(dir.join("version"))
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .or_else(|| {
                dir.file_name()
                    .and_then(|n| n.to_str())
                    .and_then(|n| n.strip_prefix('v'))
                    .and_then(|n| n.parse().ok())
            })
            .unwrap_or(1);
        Ok(Self { version, templates })
    }

    pub fn get(&self, name: &str) -> Result<&Template, PromptError> {
        self.templates
            .get(name)
            .ok_or_else(|| PromptError::MissingTemplate(name.to_string()))
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// What a revision prompt is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevisionSubject {
    Storyline,
    Persona,
    Location,
    ImagePrompt,
    Narration,
}

impl RevisionSubject {
    fn label(self) -> &'static str {
        match self {
            RevisionSubject::Storyline => "storyline",
            RevisionSubject::Persona => "persona",
            RevisionSubject::Location => "location",
            RevisionSubject::ImagePrompt => "scene image prompt",
            RevisionSubject::Narration => "scene narration",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PromptEngine {
    templates: TemplateSet,
}

impl PromptEngine {
    pub fn new(templates: TemplateSet) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn plan_initial_generation(&self, seed: &SeedIdea) -> GenerationPlan {
        plan::plan(self.templates.version, &self.templates.templates, seed)
    }

    pub fn ideas_prompt(&self) -> Result<String, PromptError> {
        Ok(self.templates.get("ideas")?.render(&BTreeMap::new())?)
    }

    pub fn assemble_scene_prompt(
        &self,
        scene: &Scene,
        project: &StoryProject,
        graph: &LinkGraph,
    ) -> Result<MetaPrompt, PromptError> {
        let header = self.templates.get("scene_task")?.render(&BTreeMap::new())?;
        assemble_scene_prompt(&header, scene, project, graph)
    }

    /// Rendered meta-prompt text for `scene`.
    pub fn scene_prompt(
        &self,
        scene: &Scene,
        project: &StoryProject,
        graph: &LinkGraph,
    ) -> Result<String, PromptError> {
        Ok(render(&self.assemble_scene_prompt(scene, project, graph)?))
    }

    /// Component-scoped revision prompt: the component as JSON, the user's
    /// instruction, and the story tones. Nothing else from the project.
    pub fn revision_prompt(
        &self,
        subject: RevisionSubject,
        component_json: &str,
        instruction: &str,
        tones: &[Tone],
    ) -> Result<String, PromptError> {
        let tones: Vec<&str> = tones.iter().map(Tone::as_str).collect();
        let vars: BTreeMap<&str, String> = [
            ("kind", subject.label().to_string()),
            ("component", component_json.to_string()),
            ("instruction", instruction.to_string()),
            ("tones", serde_json::to_string(&tones).expect("tones serialize")),
        ]
        .into();
        Ok(self.templates.get("revise")?.render(&vars)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn bunny() -> SeedIdea {
        SeedIdea::user("A fast Bunny and a slow Turtle had a race...").unwrap()
    }

    #[test]
    fn step_one_carries_seed_and_cardinality() {
        let engine = PromptEngine::default();
        let plan = engine.plan_initial_generation(&bunny());
        assert_eq!(plan.steps.len(), 5);
        let step1 = plan.step(StepKind::Storyline).template.clone().into_text().unwrap();
        assert!(step1.contains("A fast Bunny and a slow Turtle had a race..."));
        assert!(step1.contains("1-3 characters and 1-3 locations"));
        let step3 = plan.step(StepKind::Personas).template.to_source();
        for attr in ["age", "clothing", "skin", "hair"] {
            assert!(step3.contains(attr));
        }
        let step5 = plan.step(StepKind::Scenes).template.to_source();
        assert!(step5.contains("exactly six scenes"));
        assert!(step5.contains("narration") && step5.contains("image prompt"));
    }

    #[test]
    fn plans_are_deterministic() {
        let engine = PromptEngine::default();
        let a = engine.plan_initial_generation(&bunny());
        let b = engine.plan_initial_generation(&bunny());
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn steps_only_use_earlier_outputs() {
        let plan = PromptEngine::default().plan_initial_generation(&bunny());
        let mut available: BTreeSet<&str> = BTreeSet::new();
        for step in &plan.steps {
            for p in step.template.placeholders() {
                assert!(available.contains(p), "step {} uses `{p}` too early", step.kind);
            }
            available.extend(step.kind.outputs());
        }
    }

    #[test]
    fn builtin_templates_round_trip_through_source() {
        let set = TemplateSet::builtin();
        for name in TEMPLATE_NAMES {
            let t = set.get(name).unwrap();
            assert_eq!(&Template::parse(name, &t.to_source()).unwrap(), t);
        }
    }

    #[test]
    fn load_dir_matches_builtin() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("templates/v1");
        let loaded = TemplateSet::load_dir(&dir).unwrap();
        assert_eq!(loaded, TemplateSet::builtin());
        let missing = TemplateSet::load_dir(Path::new("/nonexistent"));
        assert!(matches!(missing, Err(PromptError::MissingTemplate(_))));
    }
}
