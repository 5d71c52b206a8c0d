//! Five-step initial generation followed by the per-scene image fan-out.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::genai::{generate, GenerateError, GeneratedImage, ProviderRequest};
use crate::link;
use crate::model::{
    new_project, EntityId, Location, Persona, ProjectStatus, Scene, SeedIdea, StoryProject, Storyline, Tone,
    SCENE_COUNT,
};
use crate::prompt::{PromptError, StepKind};
use crate::revision::{render_scenes, EditContext, RevisionError};
use crate::schema::{IdeasOut, LocationsOut, OutputSpec, PersonasOut, ScenesOut, StorylineOut, TonesOut};
use crate::validate::{validate_project, ValidationReport};

/// Where in the pipeline a failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ideas,
    Step(StepKind),
    Images,
    Validation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Ideas => f.write_str("ideas"),
            Stage::Step(k) => write!(f, "step {} ({k})", k.number()),
            Stage::Images => f.write_str("images"),
            Stage::Validation => f.write_str("validation"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Generation {
        stage: Stage,
        #[source]
        source: GenerateError,
    },
    #[error("{stage}: {source}")]
    Prompt {
        stage: Stage,
        #[source]
        source: PromptError,
    },
    #[error("generated project is invalid: {}", .0.violations.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(ValidationReport),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Generation { stage, .. } | PipelineError::Prompt { stage, .. } => *stage,
            PipelineError::Invalid(_) => Stage::Validation,
        }
    }
}

/// A freshly generated project and the image bytes it references.
#[derive(Debug, Clone)]
pub struct Generated {
    pub project: StoryProject,
    pub assets: Vec<GeneratedImage>,
}

fn run<T: serde::de::DeserializeOwned>(
    ctx: &EditContext<'_>,
    stage: Stage,
    prompt: String,
    output: impl Into<OutputSpec>,
) -> Result<T, PipelineError> {
    let request = ProviderRequest::text(prompt, output).with_budget(ctx.budget);
    generate(&request, ctx.provider)
        .map(|r| r.parse())
        .map_err(|source| PipelineError::Generation { stage, source })
}

/// Exactly four seed suggestions.
pub fn suggest_ideas(ctx: &EditContext<'_>) -> Result<Vec<String>, PipelineError> {
    let prompt = ctx.prompts.ideas_prompt().map_err(|source| PipelineError::Prompt {
        stage: Stage::Ideas,
        source,
    })?;
    let out: IdeasOut = run(ctx, Stage::Ideas, prompt, crate::schema::SchemaId::Ideas)?;
    Ok(out.ideas)
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializes")
}

fn tones_of(labels: Vec<String>) -> Vec<Tone> {
    labels
        .into_iter()
        .map(|l| Tone::new(l).expect("schema-checked tone"))
        .collect()
}

/// Run the five text steps and render every scene once.
pub fn create_project(seed: SeedIdea, ctx: &EditContext<'_>) -> Result<Generated, PipelineError> {
    let plan = ctx.prompts.plan_initial_generation(&seed);
    let mut vars: BTreeMap<&str, String> = BTreeMap::new();
    let render = |kind: StepKind, vars: &BTreeMap<&str, String>| {
        plan.step(kind).render(vars).map_err(|e| PipelineError::Prompt {
            stage: Stage::Step(kind),
            source: e.into(),
        })
    };

    let step = StepKind::Storyline;
    let story: StorylineOut = run(ctx, Stage::Step(step), render(step, &vars)?, step.schema())?;
    vars.insert("storyline", story.storyline.clone());
    vars.insert("character_names", json(&story.characters));
    vars.insert("location_names", json(&story.locations));

    let step = StepKind::Tones;
    let tones: TonesOut = run(ctx, Stage::Step(step), render(step, &vars)?, step.schema())?;
    vars.insert("tones", json(&tones.tones));

    let step = StepKind::Personas;
    let spec = OutputSpec {
        id: step.schema(),
        expected_names: story.characters.clone(),
    };
    let personas: PersonasOut = run(ctx, Stage::Step(step), render(step, &vars)?, spec)?;
    vars.insert("persona_profiles", json(&personas.personas));

    let step = StepKind::Locations;
    let spec = OutputSpec {
        id: step.schema(),
        expected_names: story.locations.clone(),
    };
    let locations: LocationsOut = run(ctx, Stage::Step(step), render(step, &vars)?, spec)?;
    vars.insert("location_profiles", json(&locations.locations));

    let step = StepKind::Scenes;
    let scenes: ScenesOut = run(ctx, Stage::Step(step), render(step, &vars)?, step.schema())?;

    let mut project = new_project(seed);
    project.storyline = Some(Storyline {
        text: story.storyline,
        tones: tones_of(tones.tones),
    });
    // Keep the storyline's spelling and order; the schema check already
    // matched every returned name to one of these.
    project.personas = story
        .characters
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let p = personas
                .personas
                .iter()
                .find(|p| link::fold_str(p.name.trim()) == link::fold_str(name.trim()))
                .expect("schema-checked names");
            Persona {
                id: EntityId::persona(i + 1),
                name: name.trim().to_string(),
                age: p.age.clone(),
                clothing: p.clothing.clone(),
                skin: p.skin.clone(),
                hair: p.hair.clone(),
                extra: p.extra.clone().filter(|e| !e.trim().is_empty()),
            }
        })
        .collect();
    project.locations = story
        .locations
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let l = locations
                .locations
                .iter()
                .find(|l| link::fold_str(l.name.trim()) == link::fold_str(name.trim()))
                .expect("schema-checked names");
            Location {
                id: EntityId::location(i + 1),
                name: name.trim().to_string(),
                description: l.description.clone(),
            }
        })
        .collect();
    project.scenes = scenes
        .scenes
        .into_iter()
        .take(SCENE_COUNT)
        .enumerate()
        .map(|(i, s)| {
            let mut scene = Scene::new(i as u8 + 1, s.image_prompt, s.narration);
            scene.tones = tones_of(s.tones);
            scene
        })
        .collect();
    project.status = ProjectStatus::Generated;
    crate::fixtures::refresh_links(&mut project);

    let indices: Vec<u8> = project.scenes.iter().map(|s| s.index).collect();
    let rendered = render_scenes(&project, &indices, ctx).map_err(|e| match e {
        RevisionError::Generation(source) => PipelineError::Generation {
            stage: Stage::Images,
            source,
        },
        RevisionError::Prompt(source) => PipelineError::Prompt {
            stage: Stage::Images,
            source,
        },
        other => unreachable!("scene rendering cannot fail with {other}"),
    })?;
    let mut assets = Vec::with_capacity(rendered.len());
    for (scene, _, image) in rendered {
        *project.scene_mut(scene.index).expect("exists") = scene.clone();
        assets.push(image);
    }

    let report = validate_project(&project);
    if !report.ok {
        return Err(PipelineError::Invalid(report));
    }
    Ok(Generated { project, assets })
}
