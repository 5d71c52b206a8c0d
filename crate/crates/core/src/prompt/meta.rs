//! Per-scene meta-prompts: the scene text plus the full current profile of
//! every persona and location the scene mentions.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::link::LinkGraph;
use crate::model::{EntityId, EntityKind, EntityView, Scene, StoryProject, Tone};
use crate::schema::SchemaId;

use super::PromptError;

/// One linked entity's profile as embedded in a scene prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityBlock {
    pub id: EntityId,
    pub name: String,
    /// Canonical serialized profile; appears verbatim in the rendered prompt.
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPrompt {
    pub task_header: String,
    pub style: String,
    pub entity_blocks: Vec<EntityBlock>,
    pub scene_body: String,
    pub narration: String,
    pub tones: Vec<Tone>,
    pub output_schema_id: SchemaId,
}

/// Canonical profile serialization. Personas always carry all four
/// attributes; `extra` only when set.
pub fn serialize_entity(entity: EntityView<'_>) -> String {
    let value = match entity {
        EntityView::Persona(p) => {
            let mut v = json!({
                "name": p.name,
                "age": p.age,
                "clothing": p.clothing,
                "skin": p.skin,
                "hair": p.hair,
            });
            if let Some(extra) = &p.extra {
                v["extra"] = json!(extra);
            }
            v
        }
        EntityView::Location(l) => json!({
            "name": l.name,
            "description": l.description,
        }),
    };
    // serde_json's default map keeps keys sorted, so this is canonical.
    serde_json::to_string(&value).expect("profile serializes")
}

pub fn entity_block(entity: EntityView<'_>) -> EntityBlock {
    EntityBlock {
        id: entity.id().clone(),
        name: entity.name().to_string(),
        description: serialize_entity(entity),
    }
}

/// Build the meta-prompt for `scene` from the project's current entities.
pub fn assemble_scene_prompt(
    task_header: &str,
    scene: &Scene,
    project: &StoryProject,
    graph: &LinkGraph,
) -> Result<MetaPrompt, PromptError> {
    let mut entity_blocks = Vec::new();
    for id in graph.scene_entities(scene.index) {
        let entity = project.entity(&id).ok_or_else(|| PromptError::UnknownEntity {
            scene: scene.index,
            entity: id.clone(),
        })?;
        entity_blocks.push(entity_block(entity));
    }
    Ok(MetaPrompt {
        task_header: task_header.trim().to_string(),
        style: project.style.clone(),
        entity_blocks,
        scene_body: scene.image_prompt.clone(),
        narration: scene.narration.clone(),
        tones: scene.tones.clone(),
        output_schema_id: SchemaId::SceneRender,
    })
}

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

/// Flatten to provider text.
///
/// Every line is `key: <json>`, and JSON values never contain a raw
/// newline, so the text parses back unambiguously into the meta-prompt it
/// came from.
pub fn render(meta: &MetaPrompt) -> String {
    let mut out = String::new();
    out.push_str(&format!("task: {}\n", quoted(&meta.task_header)));
    out.push_str(&format!("schema: {}\n", quoted(meta.output_schema_id.as_str())));
    out.push_str(&format!("style: {}\n", quoted(&meta.style)));
    for block in &meta.entity_blocks {
        let key = match block.id.kind() {
            EntityKind::Persona => "persona",
            EntityKind::Location => "location",
        };
        out.push_str(&format!("{key} {}: {}\n", quoted(block.id.as_str()), block.description));
    }
    out.push_str(&format!("image_prompt: {}\n", quoted(&meta.scene_body)));
    out.push_str(&format!("narration: {}\n", quoted(&meta.narration)));
    let tones: Vec<&str> = meta.tones.iter().map(Tone::as_str).collect();
    out.push_str(&format!(
        "tones: {}\n",
        serde_json::to_string(&tones).expect("tones serialize")
    ));
    out
}
