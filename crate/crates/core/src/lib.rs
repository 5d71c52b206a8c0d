//! Story co-creation engine.
//!
//! A story is decomposed into a storyline, personas, locations and six
//! scenes. Entity names mentioned in scene texts link those scenes to the
//! entity, so editing a persona or location reassembles exactly the scene
//! prompts that mention it.

pub mod digest;
pub mod export;
pub mod fixtures;
pub mod genai;
pub mod link;
pub mod model;
pub mod pipeline;
pub mod prompt;
pub mod revision;
pub mod schema;
pub mod store;
pub mod studio;
pub mod validate;

pub use genai::{
    generate, mock_provider, GenerateError, Provider, ProviderRegistry, ProviderRequest, ProviderResponse,
};
pub use link::{build_graph, extract_refs, EntityRef, LinkGraph};
pub use model::{new_project, EntityId, EntityKind, SeedIdea, StoryProject};
pub use revision::{Applied, ComponentRef, Revision, RevisionError};
pub use store::{Store, StoreError};
pub use studio::Studio;
pub use validate::{validate_project, ValidationReport};
