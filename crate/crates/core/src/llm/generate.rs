use crate::clustering::{Candidate, CandidateStatus};
use crate::config::{ConfigError, RunConfig};
use crate::par::WorkerPool;
use crate::problem::Subtask;

use super::{
    complete_with_retry, extract_code_block, generator_prompt, solution_prompt, validator_prompt,
    CompletionBackend, CompletionRequest, PromptKind, RequestKey, RetryPolicy,
};

/// One generated program source (or its absence) keyed by request index.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSource {
    pub index: u64,
    pub source: Option<String>,
    pub reasoning_tokens: u64,
    pub failed: bool,
}

fn prompt_for(kind: PromptKind, statement: &str) -> String {
    match kind {
        PromptKind::Solution => solution_prompt(statement),
        PromptKind::TestGenerator => generator_prompt(statement),
        PromptKind::Validator => validator_prompt(statement),
        PromptKind::Selection => panic!("selection prompts need two solutions"),
    }
}

/// Issues `n` independent requests of `kind` for `subtask`; results are in
/// request-index order whatever order they complete in.
pub fn generate_sources(
    backend: &dyn CompletionBackend,
    pool: &WorkerPool,
    kind: PromptKind,
    subtask: &Subtask,
    n: u32,
    cfg: &RunConfig,
    retry: RetryPolicy,
) -> Vec<GeneratedSource> {
    let prompt = prompt_for(kind, &subtask.statement);
    let indices: Vec<u64> = (0..n as u64).collect();
    pool.map(&indices, |&index| {
        let key = RequestKey::new(kind, &subtask.subtask_id, index);
        let request = CompletionRequest {
            prompt: prompt.clone(),
            max_tokens: cfg.max_tokens,
            temperature: cfg.temperature,
            seed: Some(crate::seed::derive(
                cfg.rng_seed,
                &[kind.as_str(), &subtask.subtask_id, &index.to_string()],
            )),
        };
        match complete_with_retry(backend, &key, &request, retry) {
            Ok(result) => GeneratedSource {
                index,
                source: extract_code_block(&result.answer_text),
                reasoning_tokens: result.reasoning_length(),
                failed: false,
            },
            Err(e) => {
                log::warn!("{} {} #{index} failed: {e}", kind.as_str(), subtask.subtask_id);
                GeneratedSource {
                    index,
                    source: None,
                    reasoning_tokens: 0,
                    failed: true,
                }
            }
        }
    })
}

pub fn candidate_id(subtask_id: &str, index: u64) -> String {
    format!("{subtask_id}-c{index:05}")
}

/// Generates `k` candidate solutions. Failed slots are kept, marked
/// `generation_failed`, so `k` stays the exact pool size.
pub fn generate_candidates(
    backend: &dyn CompletionBackend,
    pool: &WorkerPool,
    subtask: &Subtask,
    k: u32,
    cfg: &RunConfig,
    retry: RetryPolicy,
) -> Result<Vec<Candidate>, ConfigError> {
    if k == 0 {
        return Err(ConfigError::Invalid {
            field: "k_generations",
            reason: "must be >= 1".into(),
        });
    }
    let sources = generate_sources(backend, pool, PromptKind::Solution, subtask, k, cfg, retry);
    Ok(sources
        .into_iter()
        .map(|g| {
            let status = if g.failed {
                CandidateStatus::GenerationFailed
            } else if g.source.is_none() {
                CandidateStatus::Unparsed
            } else {
                CandidateStatus::Ok
            };
            Candidate {
                candidate_id: candidate_id(&subtask.subtask_id, g.index),
                subtask_id: subtask.subtask_id.clone(),
                source: g.source,
                reasoning_tokens: g.reasoning_tokens,
                status,
                outputs: Vec::new(),
            }
        })
        .collect())
}
