//! Model-endpoint gateway for the evaluation pipeline.
//!
//! Every agent in the pipeline — evaluator, video generator, instruction
//! revisor, comment revisor, comment validator, and judge — talks to a
//! chat-completion-style HTTP endpoint through one shared [`ChatBackend`]
//! abstraction. Deployments differ only in configuration (URL, model name,
//! auth variable), never in code path, and `mock:` URLs swap in fully
//! deterministic in-process backends so the whole pipeline runs offline.

pub mod capture;
pub mod client;
pub mod mock;
pub mod prompts;
pub mod roles;

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Errors surfaced by the gateway and the agents built on it.
#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("auth environment variable '{0}' is not set")]
    MissingAuth(String),
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("endpoint returned status {status}: {message}")]
    Endpoint { status: u16, message: String },
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("video generation timed out")]
    GenerationTimeout,
    #[error("endpoint reply is not a chat completion: {0}")]
    MalformedResponse(String),
    #[error("completion failed to parse after a format reminder: {last_error}")]
    ParseFailedTwice {
        last_error: String,
        completion: String,
    },
    #[error("verdict could not be parsed: {0:?}")]
    UnparseableVerdict(String),
    #[error("revision came back empty")]
    EmptyRevision,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Where and how to reach one agent's endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Full chat-completions URL, or a `mock:<role>` scheme for the
    /// deterministic in-process backends.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. The token
    /// itself is read at request time and never stored or logged.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Retries after the first attempt, for server errors and timeouts only.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Maximum concurrent in-flight requests to this endpoint.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_retries() -> u32 {
    2
}

fn default_parallelism() -> usize {
    4
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            auth_env: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            parallelism: default_parallelism(),
        }
    }
}

/// Message author role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// Message content: plain text or multimodal parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

/// One part of a multimodal message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: MessageContent,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: MessageContent::Text(text.into()),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: MessageContent::Text(text.into()),
        }
    }

    pub fn user_parts(parts: Vec<ContentPart>) -> Self {
        Self {
            role: Role::User,
            content: MessageContent::Parts(parts),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: MessageContent::Text(text.into()),
        }
    }

    /// All text carried by this message, image parts skipped.
    pub fn text(&self) -> String {
        match &self.content {
            MessageContent::Text(text) => text.clone(),
            MessageContent::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    ContentPart::ImageUrl { .. } => None,
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

/// One chat-completion request. Sampling parameters are pinned here so a
/// request's bytes are a pure function of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, temperature: f64) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature,
            max_tokens: None,
        }
    }

    /// Text of the most recent user message; what mock backends key off.
    pub fn last_user_text(&self) -> String {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.text())
            .unwrap_or_default()
    }

    /// Canonical digest of the request: serialize through a JSON value so
    /// key order is normalized, then hash. Stable across capture/replay.
    pub fn digest(&self) -> Result<String, GatewayError> {
        let value = serde_json::to_value(self)?;
        Ok(aigve_core::hash::sha256_hex(value.to_string().as_bytes()))
    }
}

/// A completed chat response.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    /// The assistant message content.
    pub content: String,
    /// The full response body, for metadata extraction.
    pub raw: serde_json::Value,
}

/// Anything that can answer chat requests: live HTTP endpoints, the
/// deterministic mocks, capture/replay wrappers.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// Builds the backend a config points at: `http(s)://` URLs get the real
/// client, `mock:<role>` URLs get the in-process mock.
pub fn backend_for(config: &EndpointConfig) -> Result<Arc<dyn ChatBackend>, GatewayError> {
    if config.url.starts_with("mock:") {
        Ok(Arc::new(mock::MockBackend::from_url(&config.url)?))
    } else if config.url.starts_with("http://") || config.url.starts_with("https://") {
        Ok(Arc::new(client::HttpChatClient::new(config.clone())?))
    } else {
        Err(GatewayError::InvalidEndpoint(format!(
            "unsupported scheme in '{}'",
            config.url
        )))
    }
}

/// Encodes a PNG as the data URL form image parts carry.
pub fn png_data_url(png_bytes: &[u8]) -> String {
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png_bytes)
    )
}
