//! OpenAI-compatible `/chat/completions` client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResult, RequestKey};

pub struct OpenAiBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
    /// vLLM / DeepSeek style.
    #[serde(default)]
    reasoning_content: Option<String>,
    /// OpenRouter / gpt-oss style.
    #[serde(default)]
    reasoning: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    completion_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens_details: Option<CompletionDetails>,
}

#[derive(Deserialize)]
struct CompletionDetails {
    #[serde(default)]
    reasoning_tokens: Option<u64>,
}

impl OpenAiBackend {
    /// `base_url` is the API root, e.g. `http://localhost:8000/v1`.
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        OpenAiBackend {
            agent: ureq::Agent::new_with_config(config),
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
        }
    }

    /// Reads the bearer token from `api_key_env` if it is set.
    pub fn from_env(base_url: &str, model: &str, api_key_env: &str, timeout: Duration) -> Self {
        Self::new(base_url, model, std::env::var(api_key_env).ok(), timeout)
    }
}

impl CompletionBackend for OpenAiBackend {
    fn complete(
        &self,
        _key: &RequestKey,
        request: &CompletionRequest,
    ) -> Result<CompletionResult, BackendError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [Message {
                role: "user",
                content: &request.prompt,
            }],
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            seed: request.seed,
        };
        let payload = serde_json::to_string(&body).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send(payload.as_str())
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(BackendError::Transport(format!("HTTP {status}: {}", snippet(&text))));
        }
        if status >= 400 {
            return Err(BackendError::Protocol(format!("HTTP {status}: {}", snippet(&text))));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("bad response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
        let reasoning_text = choice
            .message
            .reasoning_content
            .or(choice.message.reasoning)
            .unwrap_or_default();
        let (total_tokens, reasoning_tokens) = match parsed.usage {
            Some(u) => (
                u.completion_tokens,
                u.completion_tokens_details.and_then(|d| d.reasoning_tokens),
            ),
            None => (None, None),
        };
        Ok(CompletionResult {
            reasoning_text,
            answer_text: choice.message.content.unwrap_or_default(),
            reasoning_tokens,
            total_tokens,
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }
}

fn snippet(text: &str) -> &str {
    let end = text.char_indices().nth(200).map_or(text.len(), |(i, _)| i);
    &text[..end]
}
