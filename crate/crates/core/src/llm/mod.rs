//! Completion backends, prompt templates, code extraction and the pairwise judge.

mod extract;
mod generate;
mod judge;
mod mock;
mod openai;
mod prompt;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use extract::{extract_code_block, fence};
pub use generate::{generate_candidates, generate_sources, GeneratedSource};
pub use judge::{
    draw_presentation, judge_pair, parse_verdict, FirstLabel, Judgment, LlmJudge, PresentedJudge,
    PresentedVerdict, Side, Winner,
};
pub use mock::{MockBackend, MockScript, MockScriptError};
pub use openai::OpenAiBackend;
pub use prompt::{
    generator_prompt, render_prompt, required_slots, selection_prompt, solution_prompt,
    validator_prompt, PromptKind, TemplateError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompletionResult {
    pub reasoning_text: String,
    pub answer_text: String,
    /// Backend-reported reasoning tokens, when the backend reports them.
    pub reasoning_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
    pub truncated: bool,
}

impl CompletionResult {
    /// Reported reasoning tokens, else whitespace word count × 1.3 rounded.
    pub fn reasoning_length(&self) -> u64 {
        match self.reasoning_tokens {
            Some(n) => n,
            None => estimate_tokens(&self.reasoning_text),
        }
    }
}

pub fn estimate_tokens(text: &str) -> u64 {
    let words = text.split_whitespace().count() as f64;
    (words * 1.3).round() as u64
}

/// Identifies a request independently of completion order. Mock scripts are
/// keyed on it and live requests carry it in logs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestKey {
    pub kind: PromptKind,
    pub subtask_id: String,
    pub index: u64,
    /// Re-asks of the same request (judge retries) increment this.
    pub attempt: u32,
}

impl RequestKey {
    pub fn new(kind: PromptKind, subtask_id: &str, index: u64) -> Self {
        RequestKey {
            kind,
            subtask_id: subtask_id.to_string(),
            index,
            attempt: 0,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    /// Retryable: connection failures, timeouts, 429 and 5xx responses.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

pub trait CompletionBackend: Send + Sync {
    fn complete(
        &self,
        key: &RequestKey,
        request: &CompletionRequest,
    ) -> Result<CompletionResult, BackendError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Retries transport errors with exponential backoff; protocol errors fail fast.
pub fn complete_with_retry(
    backend: &dyn CompletionBackend,
    key: &RequestKey,
    request: &CompletionRequest,
    policy: RetryPolicy,
) -> Result<CompletionResult, BackendError> {
    let mut delay = policy.base_delay;
    let mut attempt = 1;
    loop {
        match backend.complete(key, request) {
            Err(BackendError::Transport(msg)) if attempt < policy.max_attempts.max(1) => {
                log::warn!(
                    "{} {} #{}: {msg}; retrying in {delay:?}",
                    key.kind.as_str(),
                    key.subtask_id,
                    key.index
                );
                std::thread::sleep(delay);
                delay *= 2;
                attempt += 1;
            }
            other => return other,
        }
    }
}
