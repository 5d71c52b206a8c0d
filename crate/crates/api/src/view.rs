//! Response shapes. Every text field that can mention entities carries its
//! references, so clients never re-run the matcher.
//!
//! Spans are half-open offsets in Unicode scalar values (Rust `char`s).

use std::collections::BTreeSet;

use serde::Serialize;

use storyweave_core::link::{LinkGraph, LinkTarget, Span, TextField};
use storyweave_core::model::{EntityId, EntityKind, Location, Persona, Scene, StoryProject, Storyline, Tone};
use storyweave_core::revision::{PropagationResult, Revision, Snapshot};
use storyweave_core::{build_graph, ComponentRef, RevisionError};

/// One entity mention inside a text field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefView {
    pub entity: EntityId,
    pub kind: EntityKind,
    pub name: String,
    #[serde(flatten)]
    pub field: TextField,
    pub span: Span,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageView {
    pub handle: String,
    pub url: String,
    pub provider_tag: String,
    pub created_from_prompt: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneView {
    pub index: u8,
    pub image_prompt: String,
    pub narration: String,
    pub tones: Vec<Tone>,
    pub image: Option<ImageView>,
    pub stale: bool,
    pub possibly_inconsistent: bool,
    pub links: Vec<EntityId>,
    pub refs: Vec<RefView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StorylineView {
    #[serde(flatten)]
    pub storyline: Storyline,
    pub refs: Vec<RefView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MentionView {
    /// Scenes whose texts mention the entity, ascending.
    pub scenes: Vec<u8>,
    pub storyline: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PersonaView {
    #[serde(flatten)]
    pub persona: Persona,
    pub mentioned_in: MentionView,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocationView {
    #[serde(flatten)]
    pub location: Location,
    pub mentioned_in: MentionView,
}

#[derive(Debug, Clone, Serialize)]
pub struct StoryboardView {
    pub project_id: String,
    pub columns: usize,
    pub scenes: Vec<SceneView>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComponentBody {
    Storyline(StorylineView),
    Persona(PersonaView),
    Location(LocationView),
    Scene(SceneView),
    Storyboard(StoryboardView),
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentView {
    #[serde(rename = "ref")]
    pub reference: String,
    #[serde(flatten)]
    pub body: ComponentBody,
}

/// Project plus every component, annotated.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectView {
    pub id: String,
    pub archived: bool,
    pub project: StoryProject,
    pub components: Vec<ComponentView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MutationView {
    pub project_id: String,
    pub revision: Option<Revision>,
    pub propagation: Option<PropagationResult>,
    /// Post-change value of every component the revision touched.
    pub changed: Vec<ComponentView>,
}

/// Builds views against one project state.
pub struct Annotator<'a> {
    project: &'a StoryProject,
    graph: LinkGraph,
}

impl<'a> Annotator<'a> {
    pub fn new(project: &'a StoryProject) -> Self {
        Self {
            project,
            graph: build_graph(project),
        }
    }

    fn refs(&self, keep: impl Fn(TextField) -> bool) -> Vec<RefView> {
        let mut out: Vec<RefView> = self
            .graph
            .refs
            .iter()
            .filter(|r| keep(r.field))
            .filter_map(|r| {
                let e = self.project.entity(&r.entity)?;
                Some(RefView {
                    entity: r.entity.clone(),
                    kind: r.entity.kind(),
                    name: e.name().to_string(),
                    field: r.field,
                    span: r.span,
                })
            })
            .collect();
        out.sort_by_key(|r| (r.field, r.span.start));
        out
    }

    fn mentions(&self, id: &EntityId) -> MentionView {
        let targets: BTreeSet<LinkTarget> = self.graph.by_entity.get(id).cloned().unwrap_or_default();
        MentionView {
            scenes: targets
                .iter()
                .filter_map(|t| match t {
                    LinkTarget::Scene(i) => Some(*i),
                    LinkTarget::Storyline => None,
                })
                .collect(),
            storyline: targets.contains(&LinkTarget::Storyline),
        }
    }

    pub fn scene(&self, scene: &Scene) -> SceneView {
        let i = scene.index;
        SceneView {
            index: i,
            image_prompt: scene.image_prompt.clone(),
            narration: scene.narration.clone(),
            tones: scene.tones.clone(),
            image: scene.image.as_ref().map(|img| ImageView {
                handle: img.handle.clone(),
                url: format!("/v1/projects/{}/assets/{}", self.project.id, img.handle),
                provider_tag: img.provider_tag.clone(),
                created_from_prompt: img.created_from_prompt.clone(),
            }),
            stale: scene.stale,
            possibly_inconsistent: scene.possibly_inconsistent,
            links: scene.links.clone(),
            refs: self.refs(|f| f == TextField::ImagePrompt(i) || f == TextField::Narration(i)),
        }
    }

    pub fn storyboard(&self) -> StoryboardView {
        StoryboardView {
            project_id: self.project.id.clone(),
            columns: storyweave_core::export::GRID_COLUMNS,
            scenes: self.project.scenes.iter().map(|s| self.scene(s)).collect(),
        }
    }

    fn storyline(&self, s: &Storyline) -> StorylineView {
        StorylineView {
            storyline: s.clone(),
            refs: self.refs(|f| f == TextField::Storyline),
        }
    }

    fn persona(&self, p: &Persona) -> ComponentView {
        ComponentView {
            reference: p.id.to_string(),
            body: ComponentBody::Persona(PersonaView {
                persona: p.clone(),
                mentioned_in: self.mentions(&p.id),
            }),
        }
    }

    fn location(&self, l: &Location) -> ComponentView {
        ComponentView {
            reference: l.id.to_string(),
            body: ComponentBody::Location(LocationView {
                location: l.clone(),
                mentioned_in: self.mentions(&l.id),
            }),
        }
    }

    fn scene_component(&self, s: &Scene) -> ComponentView {
        ComponentView {
            reference: format!("scene-{}", s.index),
            body: ComponentBody::Scene(self.scene(s)),
        }
    }

    /// The addressed component. Scene field refs return the whole scene.
    pub fn component(&self, target: &ComponentRef) -> Result<ComponentView, RevisionError> {
        let missing = || RevisionError::UnknownComponent(target.to_string());
        Ok(match target {
            ComponentRef::Storyline => ComponentView {
                reference: "storyline".into(),
                body: ComponentBody::Storyline(self.storyline(self.project.storyline.as_ref().ok_or_else(missing)?)),
            },
            ComponentRef::Storyboard => ComponentView {
                reference: "storyboard".into(),
                body: ComponentBody::Storyboard(self.storyboard()),
            },
            ComponentRef::Entity(id) => match id.kind() {
                EntityKind::Persona => self.persona(self.project.persona(id).ok_or_else(missing)?),
                EntityKind::Location => self.location(self.project.location(id).ok_or_else(missing)?),
            },
            ComponentRef::Scene { index, .. } => self.scene_component(self.project.scene(*index).ok_or_else(missing)?),
        })
    }

    /// Storyline, personas, locations, then scenes.
    pub fn all(&self) -> Vec<ComponentView> {
        let p = self.project;
        let mut out = Vec::new();
        if let Some(s) = &p.storyline {
            out.push(ComponentView {
                reference: "storyline".into(),
                body: ComponentBody::Storyline(self.storyline(s)),
            });
        }
        out.extend(p.personas.iter().map(|x| self.persona(x)));
        out.extend(p.locations.iter().map(|x| self.location(x)));
        out.extend(p.scenes.iter().map(|s| self.scene_component(s)));
        out
    }

    /// Current values of the components named in a snapshot.
    pub fn changed(&self, snapshot: &Snapshot) -> Vec<ComponentView> {
        let mut refs: Vec<ComponentRef> = Vec::new();
        if snapshot.storyline.is_some() {
            refs.push(ComponentRef::Storyline);
        }
        refs.extend(snapshot.personas.iter().map(|p| ComponentRef::Entity(p.id.clone())));
        refs.extend(snapshot.locations.iter().map(|l| ComponentRef::Entity(l.id.clone())));
        refs.extend(snapshot.scenes.iter().map(|s| ComponentRef::Scene {
            index: s.index,
            field: None,
        }));
        refs.iter().filter_map(|r| self.component(r).ok()).collect()
    }

    pub fn project(&self, archived: bool) -> ProjectView {
        ProjectView {
            id: self.project.id.clone(),
            archived,
            project: self.project.clone(),
            components: self.all(),
        }
    }

    pub fn mutation(&self, revision: Option<&Revision>) -> MutationView {
        MutationView {
            project_id: self.project.id.clone(),
            revision: revision.cloned(),
            propagation: revision.map(|r| r.propagation.clone()),
            changed: revision.map(|r| self.changed(&r.after)).unwrap_or_default(),
        }
    }
}
