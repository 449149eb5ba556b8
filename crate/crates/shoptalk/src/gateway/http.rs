//! OpenAI-compatible chat-completions client.
//!
//! Speaks the `/chat/completions` JSON protocol: a messages array whose
//! content is either a plain string or a list of `text` / `image_url` parts.
//! Local image paths are inlined as base64 data URIs; http(s) refs pass
//! through untouched.

use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, ContentPart, GatewayError, Provider, Role, Usage};

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key; empty means no auth header.
    pub api_key_env: String,
    pub provider_id: String,
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        Self {
            config,
            client: reqwest::blocking::Client::new(),
        }
    }

    fn api_key(&self) -> Result<Option<String>, GatewayError> {
        if self.config.api_key_env.is_empty() {
            return Ok(None);
        }
        match std::env::var(&self.config.api_key_env) {
            Ok(key) if !key.is_empty() => Ok(Some(key)),
            _ => Err(GatewayError::Auth(format!(
                "credential env var {} is unset",
                self.config.api_key_env
            ))),
        }
    }

    fn encode_part(part: &ContentPart) -> Result<Value, GatewayError> {
        match part {
            ContentPart::Text { text } => Ok(json!({"type": "text", "text": text})),
            ContentPart::Image { image_ref } => {
                let url = if image_ref.is_url() {
                    image_ref.as_str().to_string()
                } else {
                    let bytes =
                        std::fs::read(image_ref.as_str()).map_err(|e| GatewayError::ImageLoad {
                            path: image_ref.as_str().to_string(),
                            reason: e.to_string(),
                        })?;
                    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
                    format!("data:image/jpeg;base64,{encoded}")
                };
                Ok(json!({"type": "image_url", "image_url": {"url": url}}))
            }
        }
    }

    fn encode_messages(request: &ChatRequest) -> Result<Vec<Value>, GatewayError> {
        request
            .messages
            .iter()
            .map(|message| {
                let role = match message.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                let parts: Result<Vec<Value>, GatewayError> =
                    message.parts.iter().map(Self::encode_part).collect();
                Ok(json!({"role": role, "content": parts?}))
            })
            .collect()
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Value,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn content_text(content: &Value) -> Option<String> {
    if let Some(s) = content.as_str() {
        return Some(s.to_string());
    }
    // some providers return a parts array even for plain replies
    content.as_array().map(|parts| {
        parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")
    })
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.config.provider_id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = json!({
            "model": self.config.model,
            "messages": Self::encode_messages(request)?,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });

        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut builder = self.client.post(&url).json(&body);
        if let Some(key) = self.api_key()? {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;

        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(GatewayError::Auth(format!("provider returned {status}")));
        }
        if status.as_u16() == 429 {
            return Err(GatewayError::RateLimited(format!(
                "provider returned {status}"
            )));
        }
        if status.is_server_error() {
            return Err(GatewayError::Transport(format!(
                "provider returned {status}"
            )));
        }
        if !status.is_success() {
            return Err(GatewayError::Provider(format!(
                "provider returned {status}"
            )));
        }

        let wire: WireResponse = response
            .json()
            .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        let choice = wire
            .choices
            .first()
            .ok_or_else(|| GatewayError::MalformedResponse("no choices in response".into()))?;
        let text = content_text(&choice.message.content).ok_or_else(|| {
            GatewayError::MalformedResponse("choice content is neither string nor parts".into())
        })?;
        let usage = wire.usage.unwrap_or_default();

        Ok(ChatResponse {
            text,
            usage: Usage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
                image_count: request.image_count(),
            },
            provider_id: self.config.provider_id.clone(),
        })
    }
}
