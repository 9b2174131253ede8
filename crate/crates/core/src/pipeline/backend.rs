//! Text-generation backends for the data pipeline.
//!
//! Two kinds: `Replay` serves recorded responses from a fixture directory and
//! is bit-deterministic (the response is a pure function of the request role
//! and payload hash), while `Remote` speaks the chat-completions wire
//! contract over HTTP with bearer-token auth read from a named environment
//! variable.

use crate::rngs::fnv1a64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("no fixture for request (expected {path})")]
    MissingFixture { path: PathBuf },
    #[error("unreadable fixture {path}: {reason}")]
    BadFixture { path: PathBuf, reason: String },
    #[error("auth token environment variable {var} is not set")]
    MissingAuth { var: String },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed backend response: {0}")]
    BadResponse(String),
}

/// Which pipeline step a request belongs to. Replay responses are keyed by
/// role as well as payload, so the same prompt text can map to different
/// answers at different pipeline stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestRole {
    PseudoCot,
    Description,
    Reasoning,
}

impl RequestRole {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestRole::PseudoCot => "pseudo_cot",
            RequestRole::Description => "description",
            RequestRole::Reasoning => "reasoning",
        }
    }
}

/// One content part of a chat message. Text-only backends get plain strings;
/// vision-capable backends get the image reference as a content part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: MessageContent,
}

impl ChatMessage {
    pub fn user_text(text: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: MessageContent::Text(text.into()),
        }
    }

    pub fn user_with_image(text: impl Into<String>, image_ref: &str) -> Self {
        Self {
            role: "user".into(),
            content: MessageContent::Parts(vec![
                ContentPart::Text { text: text.into() },
                ContentPart::ImageUrl {
                    image_url: ImageUrl {
                        url: image_ref.to_string(),
                    },
                },
            ]),
        }
    }
}

/// The chat-completions request body: `{model, messages, temperature}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// Stable fixture key for a (role, request) pair.
pub fn request_key(role: RequestRole, request: &ChatRequest) -> u64 {
    let payload = serde_json::to_string(request).expect("request serializes");
    fnv1a64(format!("{}\n{payload}", role.as_str()).as_bytes())
}

#[derive(Serialize, Deserialize)]
struct Fixture {
    role: String,
    response: String,
}

/// Backend that replays recorded responses from a directory of JSON files
/// keyed by request-payload hash.
#[derive(Clone, Debug)]
pub struct ReplayBackend {
    pub dir: PathBuf,
    pub model: String,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>, model: impl Into<String>) -> Self {
        Self {
            dir: dir.into(),
            model: model.into(),
        }
    }

    fn fixture_path(&self, role: RequestRole, request: &ChatRequest) -> PathBuf {
        self.dir
            .join(format!("{:016x}.json", request_key(role, request)))
    }

    pub fn generate(&self, role: RequestRole, request: &ChatRequest) -> Result<String, BackendError> {
        let path = self.fixture_path(role, request);
        let raw = std::fs::read_to_string(&path)
            .map_err(|_| BackendError::MissingFixture { path: path.clone() })?;
        let fixture: Fixture = serde_json::from_str(&raw).map_err(|e| BackendError::BadFixture {
            path,
            reason: e.to_string(),
        })?;
        Ok(fixture.response)
    }

    /// Write a fixture for the given request. Used to build replay corpora
    /// in tests and examples.
    pub fn record(
        &self,
        role: RequestRole,
        request: &ChatRequest,
        response: &str,
    ) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.fixture_path(role, request);
        let fixture = Fixture {
            role: role.as_str().to_string(),
            response: response.to_string(),
        };
        std::fs::write(&path, serde_json::to_string_pretty(&fixture)?)?;
        Ok(path)
    }
}

/// Backend that POSTs to a chat-completions endpoint.
#[derive(Clone, Debug)]
pub struct RemoteBackend {
    pub base_url: String,
    pub model: String,
    pub auth_env: String,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl RemoteBackend {
    pub fn generate(&self, _role: RequestRole, request: &ChatRequest) -> Result<String, BackendError> {
        let token = std::env::var(&self.auth_env).map_err(|_| BackendError::MissingAuth {
            var: self.auth_env.clone(),
        })?;
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let body = serde_json::to_string(request)
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
            }
            match agent
                .post(&url)
                .header("authorization", &format!("Bearer {token}"))
                .header("content-type", "application/json")
                .send(body.as_bytes())
            {
                Ok(mut response) => {
                    let text = response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| BackendError::BadResponse(e.to_string()))?;
                    return extract_content(&text);
                }
                Err(err) => last = err.to_string(),
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last,
        })
    }
}

/// Pull `choices[0].message.content` out of a chat-completions response,
/// accepting either a plain string or an array of text parts.
fn extract_content(response_text: &str) -> Result<String, BackendError> {
    let value: serde_json::Value = serde_json::from_str(response_text)
        .map_err(|e| BackendError::BadResponse(format!("invalid JSON: {e}")))?;
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::BadResponse("missing choices[0].message.content".into()))?;
    match content {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Array(parts) => {
            let mut out = String::new();
            for part in parts {
                if let Some(text) = part.get("text").and_then(|t| t.as_str()) {
                    out.push_str(text);
                }
            }
            Ok(out)
        }
        other => Err(BackendError::BadResponse(format!(
            "unsupported content shape: {other}"
        ))),
    }
}

/// A configured generation backend.
#[derive(Clone, Debug)]
pub enum GenBackend {
    Replay(ReplayBackend),
    Remote(RemoteBackend),
}

impl GenBackend {
    pub fn model(&self) -> &str {
        match self {
            GenBackend::Replay(b) => &b.model,
            GenBackend::Remote(b) => &b.model,
        }
    }

    /// Short identifier recorded into pipeline metadata.
    pub fn id(&self) -> String {
        match self {
            GenBackend::Replay(b) => format!("replay:{}", b.model),
            GenBackend::Remote(b) => format!("remote:{}@{}", b.model, b.base_url),
        }
    }

    pub fn generate(&self, role: RequestRole, request: &ChatRequest) -> Result<String, BackendError> {
        match self {
            GenBackend::Replay(b) => b.generate(role, request),
            GenBackend::Remote(b) => b.generate(role, request),
        }
    }

    pub fn replay(dir: impl AsRef<Path>, model: impl Into<String>) -> Self {
        GenBackend::Replay(ReplayBackend::new(dir.as_ref().to_path_buf(), model))
    }
}
