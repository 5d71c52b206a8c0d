//! Record a live provider's replies to a fixture directory and serve them
//! back offline.
//!
//! Layout: one `<digest>.json` file per request, where the digest covers the
//! schema id, modality and exact prompt text.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::schema::SchemaId;

use super::{Modality, Provider, ProviderCall, ProviderError, RawImage, RawOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureImage {
    pub handle: String,
    pub media_type: String,
    pub provider_tag: String,
    pub bytes_base64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub digest: String,
    pub schema_id: SchemaId,
    pub modality: Modality,
    pub prompt: String,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<FixtureImage>,
}

pub fn request_digest(call: &ProviderCall<'_>) -> String {
    digest::sha256_fields(&[
        call.schema.as_str().as_bytes(),
        call.modality.as_str().as_bytes(),
        call.prompt.as_bytes(),
    ])
}

fn fixture_path(dir: &Path, digest: &str) -> PathBuf {
    dir.join(format!("{digest}.json"))
}

fn io_err(e: std::io::Error) -> ProviderError {
    ProviderError::Transport {
        message: format!("fixture store: {e}"),
        retriable: false,
    }
}

/// Wraps a provider and persists every successful reply.
pub struct RecordingProvider {
    inner: Arc<dyn Provider>,
    dir: PathBuf,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn Provider>, dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err)?;
        Ok(Self { inner, dir })
    }
}

impl Provider for RecordingProvider {
    fn tag(&self) -> &str {
        self.inner.tag()
    }

    fn call(&self, call: &ProviderCall<'_>) -> Result<RawOutput, ProviderError> {
        let out = self.inner.call(call)?;
        let digest = request_digest(call);
        let fixture = Fixture {
            digest: digest.clone(),
            schema_id: call.schema,
            modality: call.modality,
            prompt: call.prompt.to_string(),
            raw: out.text.clone(),
            image: out.image.as_ref().map(|img| FixtureImage {
                handle: img.handle.clone(),
                media_type: img.media_type.clone(),
                provider_tag: img.provider_tag.clone(),
                bytes_base64: B64.encode(&img.bytes),
            }),
        };
        let body = serde_json::to_string_pretty(&fixture).expect("fixture serializes");
        let tmp = self.dir.join(format!(".{digest}.tmp"));
        fs::write(&tmp, body).map_err(io_err)?;
        fs::rename(&tmp, fixture_path(&self.dir, &digest)).map_err(io_err)?;
        Ok(out)
    }
}

/// Serves recorded replies; never touches the network.
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl Provider for ReplayProvider {
    fn tag(&self) -> &str {
        "replay"
    }

    fn call(&self, call: &ProviderCall<'_>) -> Result<RawOutput, ProviderError> {
        let digest = request_digest(call);
        let path = fixture_path(&self.dir, &digest);
        let body = match fs::read_to_string(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ProviderError::ReplayMiss { digest }),
            Err(e) => {
                return Err(ProviderError::CorruptFixture {
                    digest,
                    reason: e.to_string(),
                })
            }
        };
        let corrupt = |reason: String| ProviderError::CorruptFixture {
            digest: digest.clone(),
            reason,
        };
        let fixture: Fixture = serde_json::from_str(&body).map_err(|e| corrupt(e.to_string()))?;
        if fixture.digest != digest || fixture.prompt != call.prompt {
            return Err(corrupt("fixture does not match the request".into()));
        }
        let image = match fixture.image {
            Some(img) => Some(RawImage {
                handle: img.handle,
                media_type: img.media_type,
                provider_tag: img.provider_tag,
                bytes: B64
                    .decode(img.bytes_base64)
                    .map_err(|e| corrupt(format!("image bytes: {e}")))?,
            }),
            None => None,
        };
        Ok(RawOutput {
            text: fixture.raw,
            image,
        })
    }
}

/// `inner` is required in record mode and ignored in replay mode.
pub fn record_replay_provider(
    mode: ReplayMode,
    dir: impl Into<PathBuf>,
    inner: Option<Arc<dyn Provider>>,
) -> Result<Arc<dyn Provider>, ProviderError> {
    match mode {
        ReplayMode::Replay => Ok(Arc::new(ReplayProvider::new(dir))),
        ReplayMode::Record => {
            let inner = inner.ok_or_else(|| ProviderError::Transport {
                message: "record mode needs a provider to wrap".into(),
                retriable: false,
            })?;
            Ok(Arc::new(RecordingProvider::new(inner, dir)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genai::{generate, mock_provider, GenerateError, ProviderRequest};

    fn tones_request() -> ProviderRequest {
        ProviderRequest::text("<storyline>\nBlaze ran.\n</storyline>", SchemaId::Tones)
    }

    #[test]
    fn record_with_no_requests_leaves_directory_empty() {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = dir.path().join("fixtures");
        let _p = record_replay_provider(ReplayMode::Record, &fixtures, Some(Arc::new(mock_provider(1)))).unwrap();
        assert!(fixtures.is_dir());
        assert_eq!(fs::read_dir(&fixtures).unwrap().count(), 0);
    }

    #[test]
    fn replay_serves_recorded_reply() {
        let dir = tempfile::tempdir().unwrap();
        let rec = record_replay_provider(ReplayMode::Record, dir.path(), Some(Arc::new(mock_provider(1)))).unwrap();
        let recorded = generate(&tones_request(), rec.as_ref()).unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);

        let replay = record_replay_provider(ReplayMode::Replay, dir.path(), None).unwrap();
        let replayed = generate(&tones_request(), replay.as_ref()).unwrap();
        assert_eq!(recorded, replayed);
    }

    #[test]
    fn replay_miss_names_digest() {
        let dir = tempfile::tempdir().unwrap();
        let replay = ReplayProvider::new(dir.path());
        let req = tones_request();
        let expected = request_digest(&ProviderCall {
            prompt: &req.prompt,
            schema: req.output.id,
            modality: req.modality,
        });
        let err = generate(&req, &replay).unwrap_err();
        assert!(matches!(err, GenerateError::ReplayMiss(_)));
        assert!(err.to_string().contains(&expected));
    }

    #[test]
    fn truncated_fixture_is_a_validation_failure() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingProvider::new(Arc::new(mock_provider(1)), dir.path()).unwrap();
        generate(&tones_request(), &rec).unwrap();
        let path = fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
        let body = fs::read(&path).unwrap();
        fs::write(&path, &body[..body.len() / 2]).unwrap();

        let err = generate(&tones_request(), &ReplayProvider::new(dir.path())).unwrap_err();
        match err {
            GenerateError::Exhausted { attempts, .. } => {
                assert!(attempts[0][0].contains("unreadable"));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }
}
