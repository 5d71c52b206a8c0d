use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::SeedIdea;
use crate::schema::SchemaId;

use super::template::Template;
use super::TemplateError;

/// The five initial-generation steps, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Storyline,
    Tones,
    Personas,
    Locations,
    Scenes,
}

impl StepKind {
    pub const ORDER: [StepKind; 5] = [
        StepKind::Storyline,
        StepKind::Tones,
        StepKind::Personas,
        StepKind::Locations,
        StepKind::Scenes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Storyline => "storyline",
            StepKind::Tones => "tones",
            StepKind::Personas => "personas",
            StepKind::Locations => "locations",
            StepKind::Scenes => "scenes",
        }
    }

    pub fn number(self) -> usize {
        Self::ORDER.iter().position(|k| *k == self).unwrap() + 1
    }

    pub fn schema(self) -> SchemaId {
        match self {
            StepKind::Storyline => SchemaId::Storyline,
            StepKind::Tones => SchemaId::Tones,
            StepKind::Personas => SchemaId::Personas,
            StepKind::Locations => SchemaId::Locations,
            StepKind::Scenes => SchemaId::Scenes,
        }
    }

    /// Placeholder names this step's output binds for later steps.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            StepKind::Storyline => &["storyline", "character_names", "location_names"],
            StepKind::Tones => &["tones"],
            StepKind::Personas => &["persona_profiles"],
            StepKind::Locations => &["location_profiles"],
            StepKind::Scenes => &[],
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSpec {
    pub kind: StepKind,
    /// Template with the seed already bound; remaining placeholders are
    /// filled from earlier steps' outputs.
    pub template: Template,
    pub schema: SchemaId,
}

impl StepSpec {
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        self.template.render(vars)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationPlan {
    pub template_version: u32,
    pub steps: Vec<StepSpec>,
}

impl GenerationPlan {
    pub fn step(&self, kind: StepKind) -> &StepSpec {
        self.steps
            .iter()
            .find(|s| s.kind == kind)
            .expect("plan holds every step")
    }

    /// Stable text form, one section per step.
    pub fn to_text(&self) -> String {
        let mut out = format!("plan v{}\n", self.template_version);
        for step in &self.steps {
            out.push_str(&format!(
                "== step {} {} -> {}\n{}\n",
                step.kind.number(),
                step.kind,
                step.schema,
                step.template.to_source()
            ));
        }
        out
    }
}

pub(super) fn plan(version: u32, templates: &BTreeMap<String, Template>, seed: &SeedIdea) -> GenerationPlan {
    let vars: BTreeMap<&str, String> = [("seed", seed.text.clone())].into();
    let steps = StepKind::ORDER
        .iter()
        .map(|&kind| StepSpec {
            kind,
            template: templates[kind.as_str()].bind(&vars),
            schema: kind.schema(),
        })
        .collect();
    GenerationPlan {
        template_version: version,
        steps,
    }
}
