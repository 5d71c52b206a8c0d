//! Providers registered by name and selected at runtime (`--provider`).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use super::replay::{RecordingProvider, ReplayProvider};
use super::{mock_provider, Provider, ProviderError};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown provider `{name}` (available: {available})")]
    Unknown { name: String, available: String },
    #[error("provider `{0}` needs a fixture directory")]
    MissingFixtures(&'static str),
    #[error("provider `{name}` is unavailable: {reason}")]
    Unavailable { name: String, reason: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Everything a factory may need. Unused fields are ignored.
#[derive(Debug, Clone, Default)]
pub struct ProviderConfig {
    /// RNG seed for the mock provider.
    pub seed: u64,
    /// Fixture directory for replay.
    pub fixtures: Option<PathBuf>,
    /// When set, wrap the built provider and record every reply here.
    pub record_to: Option<PathBuf>,
}

pub trait ProviderFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn build(&self, config: &ProviderConfig) -> Result<Arc<dyn Provider>, RegistryError>;
}

struct MockFactory;

impl ProviderFactory for MockFactory {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn description(&self) -> &'static str {
        "deterministic offline provider seeded by --seed-rng"
    }

    fn build(&self, config: &ProviderConfig) -> Result<Arc<dyn Provider>, RegistryError> {
        Ok(Arc::new(mock_provider(config.seed)))
    }
}

struct ReplayFactory;

impl ProviderFactory for ReplayFactory {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn description(&self) -> &'static str {
        "serves replies recorded in a fixture directory"
    }

    fn build(&self, config: &ProviderConfig) -> Result<Arc<dyn Provider>, RegistryError> {
        let dir = config
            .fixtures
            .clone()
            .ok_or(RegistryError::MissingFixtures("replay"))?;
        Ok(Arc::new(ReplayProvider::new(dir)))
    }
}

struct LiveFactory;

impl ProviderFactory for LiveFactory {
    fn name(&self) -> &'static str {
        "live"
    }

    fn description(&self) -> &'static str {
        "Gemini REST API; key from STORYWEAVE_API_KEY"
    }

    #[cfg(feature = "live")]
    fn build(&self, _config: &ProviderConfig) -> Result<Arc<dyn Provider>, RegistryError> {
        super::live::GeminiProvider::from_env()
            .map(|p| Arc::new(p) as Arc<dyn Provider>)
            .map_err(|reason| RegistryError::Unavailable {
                name: "live".into(),
                reason,
            })
    }

    #[cfg(not(feature = "live"))]
    fn build(&self, _config: &ProviderConfig) -> Result<Arc<dyn Provider>, RegistryError> {
        Err(RegistryError::Unavailable {
            name: "live".into(),
            reason: "built without the `live` feature".into(),
        })
    }
}

pub struct ProviderRegistry {
    factories: BTreeMap<&'static str, Box<dyn ProviderFactory>>,
}

impl ProviderRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `mock`, `replay` and `live`.
    pub fn with_builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(MockFactory));
        reg.register(Box::new(ReplayFactory));
        reg.register(Box::new(LiveFactory));
        reg
    }

    /// Later registrations replace earlier ones with the same name.
    pub fn register(&mut self, factory: Box<dyn ProviderFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn describe(&self) -> Vec<(&'static str, &'static str)> {
        self.factories.values().map(|f| (f.name(), f.description())).collect()
    }

    pub fn build(&self, name: &str, config: &ProviderConfig) -> Result<Arc<dyn Provider>, RegistryError> {
        let factory = self.factories.get(name).ok_or_else(|| RegistryError::Unknown {
            name: name.to_string(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })?;
        let provider = factory.build(config)?;
        match &config.record_to {
            Some(dir) => Ok(Arc::new(RecordingProvider::new(provider, dir.clone())?)),
            None => Ok(provider),
        }
    }
}

impl Default for ProviderRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}
