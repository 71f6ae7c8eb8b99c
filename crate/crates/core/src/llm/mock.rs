//! Offline backend driven by a TOML script.
//!
//! ```toml
//! [judge]
//! policy = "quality"      # or "constant" (with answer = "A") or "garbage"
//! accuracy = 0.9          # chance the higher-quality solution is picked
//!
//! [[completion]]
//! kind = "solution"       # solution | test_generator | validator | selection
//! subtask = "pairsum-*"   # exact id, prefix pattern ending in `*`, or `*`
//! index = 0               # optional; entries without an index are cycled
//! reasoning = "..."
//! reasoning_tokens = 900  # optional, else estimated from `reasoning`
//! answer = "```cpp ... ```"
//! ```
//!
//! The quality judge reads a `quality: <number>` marker from each presented
//! solution (missing markers count as 0).

use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use super::judge::Side;
use super::{estimate_tokens, BackendError, CompletionBackend, CompletionRequest, CompletionResult, PromptKind, RequestKey};
use crate::digest::Digest;
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum MockScriptError {
    #[error("cannot read mock script {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("invalid mock script: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum JudgePolicy {
    Constant { answer: Side },
    Quality {
        #[serde(default = "one")]
        accuracy: f64,
    },
    Garbage,
}

fn one() -> f64 {
    1.0
}

impl Default for JudgePolicy {
    fn default() -> Self {
        JudgePolicy::Quality { accuracy: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub kind: PromptKind,
    #[serde(default = "any_subtask")]
    pub subtask: String,
    pub index: Option<u64>,
    #[serde(default)]
    pub reasoning: String,
    pub reasoning_tokens: Option<u64>,
    #[serde(default)]
    pub answer: String,
    #[serde(default)]
    pub truncated: bool,
    /// Simulates a backend that never answers this request.
    #[serde(default)]
    pub transport_error: bool,
}

fn any_subtask() -> String {
    "*".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub judge: JudgePolicy,
    #[serde(default, rename = "completion")]
    pub completions: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, MockScriptError> {
        let script: MockScript = toml::from_str(text).map_err(|e| MockScriptError::Invalid(e.to_string()))?;
        if let JudgePolicy::Quality { accuracy } = script.judge {
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(MockScriptError::Invalid(format!("judge accuracy {accuracy} outside [0, 1]")));
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, MockScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| MockScriptError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

/// Higher is more specific; `None` when the pattern does not match.
fn specificity(pattern: &str, subtask: &str) -> Option<usize> {
    if pattern == subtask {
        return Some(usize::MAX);
    }
    let prefix = pattern.strip_suffix('*')?;
    subtask.starts_with(prefix).then_some(prefix.len())
}

pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend { script }
    }

    fn lookup(&self, key: &RequestKey) -> Option<&ScriptEntry> {
        let mut groups: Vec<(usize, &str)> = self
            .script
            .completions
            .iter()
            .filter(|e| e.kind == key.kind)
            .filter_map(|e| specificity(&e.subtask, &key.subtask_id).map(|s| (s, e.subtask.as_str())))
            .collect();
        groups.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        groups.dedup();
        for (_, pattern) in groups {
            let entries: Vec<&ScriptEntry> = self
                .script
                .completions
                .iter()
                .filter(|e| e.kind == key.kind && e.subtask == pattern)
                .collect();
            if let Some(e) = entries.iter().find(|e| e.index == Some(key.index)) {
                return Some(e);
            }
            let cycled: Vec<&ScriptEntry> = entries.into_iter().filter(|e| e.index.is_none()).collect();
            if !cycled.is_empty() {
                return Some(cycled[(key.index % cycled.len() as u64) as usize]);
            }
        }
        None
    }

    fn judge(&self, request: &CompletionRequest) -> CompletionResult {
        let answer = match &self.script.judge {
            JudgePolicy::Garbage => "I could not decide between the two solutions.".to_string(),
            JudgePolicy::Constant { answer } => {
                format!("Score A: 5\nScore B: 5\nJudgment: [{}]", side_letter(*answer))
            }
            JudgePolicy::Quality { accuracy } => {
                let (a, b) = presented_solutions(&request.prompt);
                let (qa, qb) = (quality_marker(a), quality_marker(b));
                let mut rng = seed::derived_rng(
                    request.seed.unwrap_or(0),
                    &[&Digest::of(request.prompt.as_bytes()).to_hex()],
                );
                let better = if qa > qb {
                    Side::A
                } else if qb > qa {
                    Side::B
                } else if rng.random_bool(0.5) {
                    Side::A
                } else {
                    Side::B
                };
                let pick = if rng.random_bool(*accuracy) {
                    better
                } else {
                    match better {
                        Side::A => Side::B,
                        Side::B => Side::A,
                    }
                };
                format!(
                    "Score A: {}\nScore B: {}\nJudgment: [{}]",
                    score_of(qa),
                    score_of(qb),
                    side_letter(pick)
                )
            }
        };
        CompletionResult {
            reasoning_text: String::new(),
            total_tokens: Some(estimate_tokens(&answer)),
            answer_text: answer,
            reasoning_tokens: Some(0),
            truncated: false,
        }
    }
}

fn side_letter(s: Side) -> char {
    match s {
        Side::A => 'A',
        Side::B => 'B',
    }
}

fn score_of(q: f64) -> u8 {
    q.round().clamp(0.0, 10.0) as u8
}

fn presented_solutions(prompt: &str) -> (&str, &str) {
    let a_start = prompt.find("### Solution A\n").map(|i| i + "### Solution A\n".len());
    let b_head = prompt.rfind("### Solution B\n");
    match (a_start, b_head) {
        (Some(a), Some(b)) if b >= a => {
            let b_start = b + "### Solution B\n".len();
            let b_end = prompt[b_start..]
                .rfind("Finish your reasoning")
                .map_or(prompt.len(), |i| b_start + i);
            (&prompt[a..b], &prompt[b_start..b_end])
        }
        _ => ("", ""),
    }
}

/// Reads the first `quality: <number>` marker in `code`.
pub fn quality_marker(code: &str) -> f64 {
    code.find("quality:")
        .and_then(|i| {
            code[i + "quality:".len()..]
                .split_whitespace()
                .next()
                .and_then(|t| t.parse::<f64>().ok())
        })
        .unwrap_or(0.0)
}

impl CompletionBackend for MockBackend {
    fn complete(
        &self,
        key: &RequestKey,
        request: &CompletionRequest,
    ) -> Result<CompletionResult, BackendError> {
        match self.lookup(key) {
            Some(e) if e.transport_error => Err(BackendError::Transport(format!(
                "scripted failure for {} {} #{}",
                key.kind.as_str(),
                key.subtask_id,
                key.index
            ))),
            Some(e) => {
                let reasoning_tokens = e.reasoning_tokens.unwrap_or_else(|| estimate_tokens(&e.reasoning));
                Ok(CompletionResult {
                    reasoning_text: e.reasoning.clone(),
                    answer_text: e.answer.clone(),
                    reasoning_tokens: e.reasoning_tokens,
                    total_tokens: Some(reasoning_tokens + estimate_tokens(&e.answer)),
                    truncated: e.truncated,
                })
            }
            None if key.kind == PromptKind::Selection => Ok(self.judge(request)),
            None => Err(BackendError::Protocol(format!(
                "mock script has no {} completion for {} #{}",
                key.kind.as_str(),
                key.subtask_id,
                key.index
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{parse_verdict, selection_prompt};

    fn req(prompt: &str, seed: u64) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.into(),
            max_tokens: 100,
            temperature: None,
            seed: Some(seed),
        }
    }

    const SCRIPT: &str = r#"
[judge]
policy = "quality"
accuracy = 1.0

[[completion]]
kind = "solution"
subtask = "p-*"
answer = "generic-0"
[[completion]]
kind = "solution"
subtask = "p-*"
answer = "generic-1"
[[completion]]
kind = "solution"
subtask = "p-s2"
index = 1
answer = "pinned"
reasoning = "a b c d"
[[completion]]
kind = "validator"
answer = "v"
transport_error = true
"#;

    #[test]
    fn lookup_precedence() {
        let m = MockBackend::new(MockScript::parse(SCRIPT).unwrap());
        let get = |sub: &str, i| {
            m.complete(&RequestKey::new(PromptKind::Solution, sub, i), &req("x", 0))
                .map(|r| r.answer_text)
        };
        assert_eq!(get("p-s1", 0).unwrap(), "generic-0");
        assert_eq!(get("p-s1", 3).unwrap(), "generic-1");
        assert_eq!(get("p-s2", 1).unwrap(), "pinned");
        assert_eq!(get("p-s2", 2).unwrap(), "generic-0");
        assert!(matches!(get("q-s1", 0), Err(BackendError::Protocol(_))));
        let v = m.complete(&RequestKey::new(PromptKind::Validator, "any", 0), &req("x", 0));
        assert!(matches!(v, Err(BackendError::Transport(_))));
    }

    #[test]
    fn reasoning_tokens_estimated_when_not_scripted() {
        let m = MockBackend::new(MockScript::parse(SCRIPT).unwrap());
        let r = m.complete(&RequestKey::new(PromptKind::Solution, "p-s2", 1), &req("x", 0)).unwrap();
        assert_eq!(r.reasoning_length(), 5);
    }

    #[test]
    fn quality_judge_picks_marked_better() {
        let m = MockBackend::new(MockScript::parse(SCRIPT).unwrap());
        let prompt = selection_prompt("P", "// quality: 3\nint a;", "// quality: 8\nint b;");
        let r = m.complete(&RequestKey::new(PromptKind::Selection, "p-s1", 9), &req(&prompt, 9)).unwrap();
        let v = parse_verdict(&r.answer_text).unwrap();
        assert_eq!((v.score_a, v.score_b, v.pick), (Some(3), Some(8), Some(Side::B)));
    }

    #[test]
    fn constant_and_garbage_policies() {
        let m = MockBackend::new(MockScript::parse("[judge]\npolicy = \"constant\"\nanswer = \"A\"").unwrap());
        let r = m.complete(&RequestKey::new(PromptKind::Selection, "s", 0), &req("x", 0)).unwrap();
        assert_eq!(parse_verdict(&r.answer_text).unwrap().pick, Some(Side::A));
        let m = MockBackend::new(MockScript::parse("[judge]\npolicy = \"garbage\"").unwrap());
        let r = m.complete(&RequestKey::new(PromptKind::Selection, "s", 0), &req("x", 0)).unwrap();
        assert!(parse_verdict(&r.answer_text).is_none());
    }

    #[test]
    fn rejects_bad_accuracy() {
        assert!(MockScript::parse("[judge]\npolicy = \"quality\"\naccuracy = 1.5").is_err());
    }
}
