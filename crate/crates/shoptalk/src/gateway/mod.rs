//! Uniform interface to multimodal chat-completion providers.
//!
//! A [`Gateway`] wraps one or more [`Provider`] backends behind retries, a
//! concurrency limit, per-stage routing, and token accounting. Two providers
//! ship in-tree: an OpenAI-compatible HTTP client ([`HttpProvider`]) and a
//! deterministic scripted mock ([`MockProvider`]) that lets the whole
//! pipeline run offline.

mod http;
mod json;
mod ledger;
mod mock;
mod semaphore;

pub use http::{HttpProvider, HttpProviderConfig};
pub use json::{extract_first_json_object, FieldKind, SchemaDescriptor};
pub use ledger::{CostLedger, LedgerReport, TagTotals};
pub use mock::{MockInstrument, MockProvider, MockScript};

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use semaphore::Semaphore;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("cannot load image {path}: {reason}")]
    ImageLoad { path: String, reason: String },
    #[error("structured output failed after {attempts} attempts: {reason}")]
    StructuredOutput { attempts: u32, reason: String },
    #[error("provider error: {0}")]
    Provider(String),
}

impl GatewayError {
    /// Transient errors are retried by the gateway; the rest surface at once.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited(_) | GatewayError::Transport(_)
        )
    }
}

/// Reference to an image by local path or URL. Live providers load local
/// paths as base64 payloads; the mock only ever sees a content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(pub String);

impl ImageRef {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_url(&self) -> bool {
        self.0.starts_with("http://") || self.0.starts_with("https://")
    }

    /// Stable content hash: file bytes when the path is readable, otherwise
    /// the reference string itself. Keeps mock runs deterministic without
    /// requiring image files on disk.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        match std::fs::read(&self.0) {
            Ok(bytes) => hasher.update(&bytes),
            Err(_) => hasher.update(self.0.as_bytes()),
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    Image { image_ref: ImageRef },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            parts: vec![ContentPart::Text { text: text.into() }],
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::text(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::text(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self::text(Role::Assistant, text)
    }

    pub fn with_image(mut self, image_ref: ImageRef) -> Self {
        self.parts.push(ContentPart::Image { image_ref });
        self
    }

    /// Concatenated text parts of this message.
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            if let ContentPart::Text { text } = part {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(text);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Sampling temperature in `[0, 2]`.
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Pipeline stage label; routes the request and keys cost accounting.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(tag: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: 0.1,
            max_output_tokens: 1024,
            tag: tag.into(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.tag.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("tag must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) || !self.temperature.is_finite() {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages must be non-empty".into()));
        }
        let mut systems = 0;
        for (i, message) in self.messages.iter().enumerate() {
            if message.parts.is_empty() {
                return Err(GatewayError::InvalidRequest(format!(
                    "message {i} has no content parts"
                )));
            }
            if message.role == Role::System {
                systems += 1;
                if i != 0 {
                    return Err(GatewayError::InvalidRequest(
                        "system message must come first".into(),
                    ));
                }
            }
        }
        if systems > 1 {
            return Err(GatewayError::InvalidRequest(
                "at most one system message per request".into(),
            ));
        }
        Ok(())
    }

    /// Stable fingerprint over roles, text parts, and image content hashes.
    /// The mock provider keys scripted replies and seeded draws on this.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for message in &self.messages {
            hasher.update(match message.role {
                Role::System => b"s|",
                Role::User => b"u|",
                Role::Assistant => b"a|",
            });
            for part in &message.parts {
                match part {
                    ContentPart::Text { text } => {
                        hasher.update(b"t:");
                        hasher.update(text.as_bytes());
                    }
                    ContentPart::Image { image_ref } => {
                        hasher.update(b"i:");
                        hasher.update(image_ref.content_hash().as_bytes());
                    }
                }
                hasher.update(b"\x1f");
            }
            hasher.update(b"\x1e");
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Whitespace-token count across all text parts, the unit the mock uses
    /// for prompt accounting.
    pub fn prompt_token_estimate(&self) -> u64 {
        self.messages
            .iter()
            .map(|m| m.text_content().split_whitespace().count() as u64)
            .sum()
    }

    pub fn image_count(&self) -> u64 {
        self.messages
            .iter()
            .flat_map(|m| &m.parts)
            .filter(|p| matches!(p, ContentPart::Image { .. }))
            .count() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub image_count: u64,
}

impl Usage {
    pub fn add(&mut self, other: &Usage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.image_count += other.image_count;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub provider_id: String,
}

/// A chat-completion backend.
pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// Retry policy for transient failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff: vec![
                Duration::from_millis(500),
                Duration::from_millis(1000),
                Duration::from_millis(2000),
            ],
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; unit tests use this.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            backoff: Vec::new(),
        }
    }

    fn backoff_for(&self, attempt: u32) -> Option<Duration> {
        self.backoff.get(attempt as usize).copied()
    }
}

/// Provider gateway with retries, routing, concurrency limiting, and cost
/// accounting. Cheap to share behind an `Arc`; all interior state is
/// synchronized.
pub struct Gateway {
    default_provider: Arc<dyn Provider>,
    /// Tag-prefix routes, longest prefix wins.
    routes: BTreeMap<String, Arc<dyn Provider>>,
    retry: RetryPolicy,
    limiter: Semaphore,
    ledger: CostLedger,
    json_reask_limit: u32,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        Self {
            default_provider: provider,
            routes: BTreeMap::new(),
            retry: RetryPolicy::default(),
            limiter: Semaphore::new(8),
            ledger: CostLedger::new(),
            json_reask_limit: 2,
        }
    }

    /// Route every tag starting with `prefix` to `provider`. The longest
    /// matching prefix wins; unmatched tags use the default provider.
    pub fn with_route(mut self, prefix: impl Into<String>, provider: Arc<dyn Provider>) -> Self {
        self.routes.insert(prefix.into(), provider);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency_limit(mut self, limit: usize) -> Self {
        self.limiter = Semaphore::new(limit);
        self
    }

    pub fn with_json_reask_limit(mut self, limit: u32) -> Self {
        self.json_reask_limit = limit;
        self
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn ledger_report(&self) -> LedgerReport {
        self.ledger.report()
    }

    fn provider_for(&self, tag: &str) -> &Arc<dyn Provider> {
        self.routes
            .iter()
            .filter(|(prefix, _)| tag.starts_with(prefix.as_str()))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, provider)| provider)
            .unwrap_or(&self.default_provider)
    }

    /// Validate, route, and run a request, retrying transient failures with
    /// backoff. Usage lands in the ledger under the request tag.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let provider = self.provider_for(&request.tag);
        let _permit = self.limiter.acquire();
        let mut last_err = None;
        for attempt in 0..self.retry.max_attempts {
            match provider.complete(request) {
                Ok(response) => {
                    self.ledger
                        .record(&request.tag, &response.usage, &response.provider_id);
                    return Ok(response);
                }
                Err(err) if err.is_transient() && attempt + 1 < self.retry.max_attempts => {
                    if let Some(wait) = self.retry.backoff_for(attempt) {
                        std::thread::sleep(wait);
                    }
                    last_err = Some(err);
                }
                Err(err) => return Err(err),
            }
        }
        Err(last_err.unwrap_or_else(|| GatewayError::Provider("no attempts made".into())))
    }

    /// Run a request and parse the first JSON object out of the reply,
    /// validating it against `schema`. On validation failure the model is
    /// re-asked with the violation appended, up to the configured limit.
    pub fn complete_json(
        &self,
        request: &ChatRequest,
        schema: &SchemaDescriptor,
    ) -> Result<serde_json::Value, GatewayError> {
        let mut attempt_request = request.clone();
        let attempts = 1 + self.json_reask_limit;
        let mut last_reason = String::new();
        for attempt in 0..attempts {
            let response = self.complete(&attempt_request)?;
            match extract_first_json_object(&response.text) {
                Some(value) => match schema.validate(&value) {
                    Ok(()) => return Ok(value),
                    Err(reason) => last_reason = reason,
                },
                None => last_reason = "no JSON object found in response".to_string(),
            }
            if attempt + 1 < attempts {
                attempt_request
                    .messages
                    .push(ChatMessage::user(format!(
                        "Your previous reply was not valid ({last_reason}). Respond with only a \
                         JSON object with fields: {}. (retry {})",
                        schema.describe(),
                        attempt + 1
                    )));
            }
        }
        Err(GatewayError::StructuredOutput {
            attempts,
            reason: last_reason,
        })
    }
}
