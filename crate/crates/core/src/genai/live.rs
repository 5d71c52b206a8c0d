//! Gemini REST adapter (`generateContent`).
//!
//! Environment:
//! - `STORYWEAVE_API_KEY` (required)
//! - `STORYWEAVE_TEXT_MODEL`, `STORYWEAVE_IMAGE_MODEL` (optional)
//! - `STORYWEAVE_API_BASE` (optional, defaults to the public endpoint)

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde_json::{json, Value};

use crate::digest;

use super::{Modality, Provider, ProviderCall, ProviderError, RawImage, RawOutput};

const DEFAULT_BASE: &str = "https://generativelanguage.googleapis.com/v1beta";
const DEFAULT_TEXT_MODEL: &str = "gemini-2.5-pro";
const DEFAULT_IMAGE_MODEL: &str = "gemini-3-pro-image-preview";

pub struct GeminiProvider {
    agent: ureq::Agent,
    base: String,
    api_key: String,
    text_model: String,
    image_model: String,
}

impl GeminiProvider {
    pub fn from_env() -> Result<Self, String> {
        let api_key = std::env::var("STORYWEAVE_API_KEY").map_err(|_| "STORYWEAVE_API_KEY is not set".to_string())?;
        let env_or = |k: &str, d: &str| std::env::var(k).unwrap_or_else(|_| d.to_string());
        let mut p = Self::new(api_key, env_or("STORYWEAVE_API_BASE", DEFAULT_BASE));
        p.text_model = env_or("STORYWEAVE_TEXT_MODEL", DEFAULT_TEXT_MODEL);
        p.image_model = env_or("STORYWEAVE_IMAGE_MODEL", DEFAULT_IMAGE_MODEL);
        Ok(p)
    }

    pub fn new(api_key: impl Into<String>, base: impl Into<String>) -> Self {
        Self {
            agent: ureq::Agent::config_builder().http_status_as_error(false).build().into(),
            base: base.into(),
            api_key: api_key.into(),
            text_model: DEFAULT_TEXT_MODEL.to_string(),
            image_model: DEFAULT_IMAGE_MODEL.to_string(),
        }
    }
}

fn transport(e: impl std::fmt::Display, retriable: bool) -> ProviderError {
    ProviderError::Transport {
        message: e.to_string(),
        retriable,
    }
}

impl Provider for GeminiProvider {
    fn tag(&self) -> &str {
        "gemini"
    }

    fn call(&self, call: &ProviderCall<'_>) -> Result<RawOutput, ProviderError> {
        let (model, config) = match call.modality {
            Modality::Text => (&self.text_model, json!({ "responseMimeType": "application/json" })),
            Modality::TextImage => (&self.image_model, json!({ "responseModalities": ["TEXT", "IMAGE"] })),
        };
        let body = json!({
            "contents": [{ "role": "user", "parts": [{ "text": call.prompt }] }],
            "generationConfig": config,
        });
        let url = format!("{}/models/{}:generateContent", self.base, model);
        let mut resp = self
            .agent
            .post(&url)
            .header("x-goog-api-key", &self.api_key)
            .send_json(&body)
            .map_err(|e| transport(e, true))?;
        let status = resp.status();
        if !status.is_success() {
            let retriable = status.is_server_error() || status.as_u16() == 429;
            return Err(transport(format!("HTTP {status}"), retriable));
        }
        let value: Value = resp.body_mut().read_json().map_err(|e| transport(e, true))?;
        parse_reply(&value, model)
    }
}

/// Concatenated text parts plus the first inline image.
fn parse_reply(value: &Value, model: &str) -> Result<RawOutput, ProviderError> {
    let parts = value["candidates"][0]["content"]["parts"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let mut text = String::new();
    let mut image = None;
    for part in parts {
        if let Some(t) = part["text"].as_str() {
            text.push_str(t);
        } else if let Some(data) = part["inlineData"]["data"].as_str() {
            if image.is_some() {
                continue;
            }
            let bytes = B64.decode(data).map_err(|e| transport(e, false))?;
            image = Some(RawImage {
                handle: digest::sha256_hex(&bytes),
                media_type: part["inlineData"]["mimeType"]
                    .as_str()
                    .unwrap_or("image/png")
                    .to_string(),
                bytes,
                provider_tag: format!("gemini:{model}"),
            });
        }
    }
    Ok(RawOutput { text, image })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::SchemaId;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Answers one request with `status` and `body`; returns the request
    /// head and body it received.
    fn serve_once(status: u16, body: String) -> (String, std::thread::JoinHandle<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
                head.push_str(&line);
            }
            let mut req_body = vec![0; len];
            reader.read_exact(&mut req_body).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            (head, String::from_utf8(req_body).unwrap())
        });
        (base, handle)
    }

    fn call(prompt: &str, modality: Modality) -> ProviderCall<'_> {
        ProviderCall {
            prompt,
            schema: SchemaId::Ideas,
            modality,
        }
    }

    #[test]
    fn sends_key_header_and_reads_text_and_image() {
        let png = B64.encode(b"\x89PNG fake");
        let reply = json!({ "candidates": [{ "content": { "parts": [
            { "text": "{\"narration\": " }, { "text": "\"hi\"}" },
            { "inlineData": { "mimeType": "image/png", "data": png } }
        ]}}]});
        let (base, server) = serve_once(200, reply.to_string());
        let p = GeminiProvider::new("k-123", base);
        let out = p.call(&call("draw it", Modality::TextImage)).unwrap();
        let (head, body) = server.join().unwrap();
        assert!(head.to_ascii_lowercase().contains("x-goog-api-key: k-123"));
        assert!(head.contains(&format!("/models/{DEFAULT_IMAGE_MODEL}:generateContent")));
        let sent: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(sent["contents"][0]["parts"][0]["text"], "draw it");
        assert_eq!(out.text, "{\"narration\": \"hi\"}");
        let img = out.image.unwrap();
        assert_eq!(img.bytes, b"\x89PNG fake");
        assert_eq!(img.handle, digest::sha256_hex(b"\x89PNG fake"));
    }

    #[test]
    fn status_codes_map_to_retriability() {
        for (status, retriable) in [(429, true), (503, true), (400, false)] {
            let (base, server) = serve_once(status, "{}".into());
            let err = GeminiProvider::new("k", base)
                .call(&call("x", Modality::Text))
                .unwrap_err();
            server.join().unwrap();
            match err {
                ProviderError::Transport { retriable: r, .. } => assert_eq!(r, retriable, "{status}"),
                other => panic!("{other:?}"),
            }
        }
    }
}
