//! Provider-agnostic text and image generation.
//!
//! [`generate`] is the only path from a provider to the rest of the engine:
//! every reply is checked against its [`OutputSpec`] and, on failure, the
//! request is re-sent with the validation errors appended until the attempt
//! budget runs out.

mod mock;
mod registry;
mod replay;
pub mod testing;

#[cfg(feature = "live")]
mod live;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::ImageAsset;
use crate::schema::{self, OutputSpec, SchemaId};

pub use mock::{mock_provider, MockProvider};
pub use registry::{ProviderConfig, ProviderFactory, ProviderRegistry, RegistryError};
pub use replay::{record_replay_provider, request_digest, Fixture, RecordingProvider, ReplayMode, ReplayProvider};

#[cfg(feature = "live")]
pub use live::GeminiProvider;

pub const DEFAULT_BUDGET: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    TextImage,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::TextImage => "text+image",
        }
    }
}

/// What actually goes over the wire for one attempt.
#[derive(Debug, Clone, Copy)]
pub struct ProviderCall<'a> {
    pub prompt: &'a str,
    pub schema: SchemaId,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub handle: String,
    pub media_type: String,
    pub bytes: Vec<u8>,
    pub provider_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawOutput {
    pub text: String,
    pub image: Option<RawImage>,
}

impl RawOutput {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            image: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport failure: {message}")]
    Transport { message: String, retriable: bool },
    #[error("no recorded fixture for request digest {digest}")]
    ReplayMiss { digest: String },
    #[error("fixture {digest} is unreadable: {reason}")]
    CorruptFixture { digest: String, reason: String },
}

/// A text/image generation backend. Must tolerate concurrent calls.
pub trait Provider: Send + Sync {
    fn tag(&self) -> &str;
    fn call(&self, call: &ProviderCall<'_>) -> Result<RawOutput, ProviderError>;
}

impl fmt::Debug for dyn Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Provider({})", self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderRequest {
    pub prompt: String,
    pub output: OutputSpec,
    pub modality: Modality,
    pub budget: u32,
}

impl ProviderRequest {
    pub fn text(prompt: impl Into<String>, output: impl Into<OutputSpec>) -> Self {
        Self {
            prompt: prompt.into(),
            output: output.into(),
            modality: Modality::Text,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_image(mut self) -> Self {
        self.modality = Modality::TextImage;
        self
    }

    pub fn with_budget(mut self, budget: u32) -> Self {
        self.budget = budget;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedImage {
    pub asset: ImageAsset,
    pub media_type: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderResponse {
    pub raw: String,
    pub parsed: Value,
    pub image: Option<GeneratedImage>,
    pub attempts: u32,
}

impl ProviderResponse {
    pub fn parse<T: serde::de::DeserializeOwned>(&self) -> T {
        serde_json::from_value(self.parsed.clone()).expect("schema-checked reply deserializes")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerateError {
    #[error("attempt budget must be at least 1")]
    ZeroBudget,
    #[error("{schema}: no valid reply after {} attempt(s): {}", attempts.len(), summarize(attempts))]
    Exhausted {
        schema: SchemaId,
        /// Validation errors of each attempt, in order.
        attempts: Vec<Vec<String>>,
    },
    #[error("provider transport failure on attempt {attempt}: {message}")]
    Transport {
        attempt: u32,
        message: String,
        retriable: bool,
    },
    #[error(transparent)]
    ReplayMiss(ProviderError),
}

impl GenerateError {
    pub fn attempts(&self) -> u32 {
        match self {
            GenerateError::ZeroBudget => 0,
            GenerateError::Exhausted { attempts, .. } => attempts.len() as u32,
            GenerateError::Transport { attempt, .. } => *attempt,
            GenerateError::ReplayMiss(_) => 1,
        }
    }
}

fn summarize(attempts: &[Vec<String>]) -> String {
    attempts.last().map(|errs| errs.join("; ")).unwrap_or_default()
}

fn repair_prompt(base: &str, errors: &[String]) -> String {
    let mut out = String::from(base);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("\nYour previous reply was rejected for these reasons:\n");
    for e in errors {
        out.push_str("- ");
        out.push_str(e);
        out.push('\n');
    }
    out.push_str("Reply again with corrected JSON only.\n");
    out
}

/// Call `provider` until a reply passes the request's schema or the budget
/// is spent. Transport failures stop immediately.
pub fn generate(request: &ProviderRequest, provider: &dyn Provider) -> Result<ProviderResponse, GenerateError> {
    if request.budget == 0 {
        return Err(GenerateError::ZeroBudget);
    }
    let mut failures: Vec<Vec<String>> = Vec::new();
    for attempt in 1..=request.budget {
        let prompt = match failures.last() {
            Some(errors) => repair_prompt(&request.prompt, errors),
            None => request.prompt.clone(),
        };
        let call = ProviderCall {
            prompt: &prompt,
            schema: request.output.id,
            modality: request.modality,
        };
        let raw = match provider.call(&call) {
            Ok(raw) => raw,
            Err(ProviderError::Transport { message, retriable }) => {
                return Err(GenerateError::Transport {
                    attempt,
                    message,
                    retriable,
                })
            }
            Err(miss @ ProviderError::ReplayMiss { .. }) if failures.is_empty() => {
                return Err(GenerateError::ReplayMiss(miss))
            }
            // A repair prompt that was never recorded: report the failed
            // attempts rather than the miss.
            Err(miss @ ProviderError::ReplayMiss { .. }) => {
                failures.push(vec![miss.to_string()]);
                break;
            }
            Err(corrupt @ ProviderError::CorruptFixture { .. }) => {
                failures.push(vec![corrupt.to_string()]);
                continue;
            }
        };
        let mut errors = Vec::new();
        let parsed = match schema::check(&request.output, &raw.text) {
            Ok(v) => Some(v),
            Err(e) => {
                errors = e;
                None
            }
        };
        if request.modality == Modality::TextImage && raw.image.is_none() {
            errors.push("reply carries no image".to_string());
        }
        match parsed {
            Some(parsed) if errors.is_empty() => {
                let image = raw.image.map(|img| GeneratedImage {
                    asset: ImageAsset {
                        handle: img.handle,
                        created_from_prompt: prompt.clone(),
                        provider_tag: img.provider_tag,
                    },
                    media_type: img.media_type,
                    bytes: img.bytes,
                });
                return Ok(ProviderResponse {
                    raw: raw.text,
                    parsed,
                    image,
                    attempts: attempt,
                });
            }
            _ => failures.push(errors),
        }
    }
    Err(GenerateError::Exhausted {
        schema: request.output.id,
        attempts: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::testing::{Fault, FlakyProvider, ScriptedProvider};
    use super::*;
    use std::sync::Arc;

    fn personas_request() -> ProviderRequest {
        let prompt = "Step 3 of 5\n<characters>[\"Blaze\",\"Sheldon\"]</characters>\n";
        ProviderRequest::text(
            prompt,
            OutputSpec {
                id: SchemaId::Personas,
                expected_names: vec!["Blaze".into(), "Sheldon".into()],
            },
        )
    }

    #[test]
    fn mock_personas_carry_all_attributes() {
        let provider = mock_provider(42);
        let resp = generate(&personas_request(), &provider).unwrap();
        assert_eq!(resp.attempts, 1);
        let out: schema::PersonasOut = resp.parse();
        assert_eq!(out.personas.len(), 2);
        for p in out.personas {
            for v in [&p.age, &p.clothing, &p.skin, &p.hair] {
                assert!(!v.trim().is_empty());
            }
        }
    }

    #[test]
    fn budget_one_malformed_fails_after_one_attempt() {
        let provider = ScriptedProvider::new(vec![Ok(RawOutput::text("{oops"))]);
        let err = generate(&personas_request().with_budget(1), &provider).unwrap_err();
        assert_eq!(err.attempts(), 1);
        assert_eq!(provider.calls(), 1);
        assert!(matches!(err, GenerateError::Exhausted { ref attempts, .. } if attempts.len() == 1));
    }

    #[test]
    fn fail_once_then_succeed() {
        let inner: Arc<dyn Provider> = Arc::new(mock_provider(7));
        let flaky = FlakyProvider::new(inner, [1], Fault::Malformed);
        let resp = generate(&personas_request().with_budget(3), &flaky).unwrap();
        assert_eq!(resp.attempts, 2);
        assert_eq!(flaky.calls(), 2);
        let prompts = flaky.prompts();
        assert!(prompts[1].contains("Your previous reply was rejected"));
    }

    #[test]
    fn exhausted_budget_keeps_every_attempts_errors() {
        let provider = ScriptedProvider::new(vec![
            Ok(RawOutput::text("nope")),
            Ok(RawOutput::text("{}")),
            Ok(RawOutput::text("[]")),
        ]);
        let err = generate(&personas_request(), &provider).unwrap_err();
        let GenerateError::Exhausted { attempts, schema } = err else {
            panic!("expected exhaustion")
        };
        assert_eq!(schema, SchemaId::Personas);
        assert_eq!(attempts.len(), 3);
        assert!(attempts.iter().all(|a| !a.is_empty()));
        assert_eq!(provider.calls(), 3);
    }

    #[test]
    fn transport_failure_is_distinct_and_not_retried() {
        let provider = ScriptedProvider::new(vec![Err(ProviderError::Transport {
            message: "connection reset".into(),
            retriable: true,
        })]);
        let err = generate(&personas_request(), &provider).unwrap_err();
        assert!(matches!(
            err,
            GenerateError::Transport {
                attempt: 1,
                retriable: true,
                ..
            }
        ));
        assert_eq!(provider.calls(), 1);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let provider = mock_provider(1);
        let err = generate(&personas_request().with_budget(0), &provider).unwrap_err();
        assert_eq!(err, GenerateError::ZeroBudget);
    }

    #[test]
    fn image_modality_requires_an_image() {
        let provider = ScriptedProvider::new(vec![Ok(RawOutput::text("{\"narration\":\"x\"}"))]);
        let req = ProviderRequest::text("p", SchemaId::SceneRender)
            .with_image()
            .with_budget(1);
        let err = generate(&req, &provider).unwrap_err();
        let GenerateError::Exhausted { attempts, .. } = err else {
            panic!()
        };
        assert_eq!(attempts[0], vec!["reply carries no image".to_string()]);
    }
}
