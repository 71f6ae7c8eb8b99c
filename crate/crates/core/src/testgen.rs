//! Test synthesis: LLM-written generators propose inputs, LLM-written
//! validators vote on them.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::digest::Digest;
use crate::llm::{generate_sources, CompletionBackend, PromptKind, RetryPolicy};
use crate::problem::Subtask;
use crate::sandbox::{CompiledProgram, ExitStatus, Limits, ProgramKind, Sandbox, SandboxError};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub subtask_id: String,
    #[serde(skip)]
    pub input: Vec<u8>,
    pub generator_index: u64,
    /// Command-line seed the generator was invoked with.
    pub seed: u64,
    pub approvals: u32,
    pub validators_total: u32,
}

/// A compiled generator or validator together with its request index.
#[derive(Debug, Clone)]
pub struct ToolProgram {
    pub index: u64,
    pub program: CompiledProgram,
}

#[derive(Debug, thiserror::Error)]
pub enum TestgenError {
    #[error("no {kind} for {subtask_id} compiled ({requested} requested)")]
    NoPrograms {
        kind: &'static str,
        subtask_id: String,
        requested: u32,
    },
    #[error(
        "{subtask_id}: attempt cap of {attempts} generator runs hit with {accepted}/{target} tests accepted (acceptance rate {rate:.3})"
    )]
    AttemptCap {
        subtask_id: String,
        attempts: u64,
        accepted: usize,
        target: usize,
        rate: f64,
    },
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("test index {path}: {reason}")]
    Index { path: String, reason: String },
}

fn build(
    backend: &dyn CompletionBackend,
    sandbox: &Sandbox,
    subtask: &Subtask,
    n: u32,
    cfg: &RunConfig,
    retry: RetryPolicy,
    kind: PromptKind,
) -> Result<Vec<ToolProgram>, TestgenError> {
    let (program_kind, label) = match kind {
        PromptKind::TestGenerator => (ProgramKind::Generator, "test generator"),
        _ => (ProgramKind::Validator, "validator"),
    };
    let sources = generate_sources(backend, sandbox.pool(), kind, subtask, n, cfg, retry);
    let compiled = sandbox.par_map(&sources, |g| match &g.source {
        Some(src) => sandbox.compile(src, program_kind).map(Some),
        None => Ok(None),
    });
    let mut programs = Vec::new();
    for (g, c) in sources.iter().zip(compiled) {
        match c? {
            Some(p) if p.compile_ok => programs.push(ToolProgram {
                index: g.index,
                program: p,
            }),
            Some(_) => log::info!("{label} #{} for {} does not compile", g.index, subtask.subtask_id),
            None => log::info!("{label} #{} for {} has no code block", g.index, subtask.subtask_id),
        }
    }
    if programs.is_empty() {
        return Err(TestgenError::NoPrograms {
            kind: label,
            subtask_id: subtask.subtask_id.clone(),
            requested: n,
        });
    }
    Ok(programs)
}

/// Requests `n` generators and keeps the ones that compile.
pub fn build_generators(
    backend: &dyn CompletionBackend,
    sandbox: &Sandbox,
    subtask: &Subtask,
    n: u32,
    cfg: &RunConfig,
    retry: RetryPolicy,
) -> Result<Vec<ToolProgram>, TestgenError> {
    build(backend, sandbox, subtask, n, cfg, retry, PromptKind::TestGenerator)
}

/// Requests `n` validators and keeps the ones that compile.
pub fn build_validators(
    backend: &dyn CompletionBackend,
    sandbox: &Sandbox,
    subtask: &Subtask,
    n: u32,
    cfg: &RunConfig,
    retry: RetryPolicy,
) -> Result<Vec<ToolProgram>, TestgenError> {
    build(backend, sandbox, subtask, n, cfg, retry, PromptKind::Validator)
}

/// Approval requires a clean exit and trimmed stdout exactly `passed`;
/// crashes and timeouts count against the input.
pub fn validator_approves(
    sandbox: &Sandbox,
    validator: &CompiledProgram,
    input: &[u8],
    limits: Limits,
) -> Result<bool, SandboxError> {
    let out = sandbox.run(validator, &[], input, limits)?;
    Ok(out.status == ExitStatus::Ok && out.stdout.trim_ascii() == b"passed")
}

#[derive(Debug, Clone)]
pub struct CollectParams {
    pub target: usize,
    pub threshold: f64,
    /// Generator invocations allowed per requested test.
    pub attempt_factor: u32,
    pub seed: u64,
    pub limits: Limits,
}

#[derive(Debug, Clone)]
pub struct Collection {
    pub tests: Vec<TestCase>,
    pub attempts: u64,
    /// Invocation count per generator, in generator order.
    pub invocations: Vec<u64>,
}

enum Attempt {
    Rejected,
    Produced { input: Vec<u8>, approvals: u32 },
}

/// Round-robin over `generators`; every fresh non-empty input is run through
/// all validators and kept iff approvals / validators ≥ threshold. Attempts
/// run in parallel batches but are accepted strictly in rotation order.
pub fn collect_tests(
    sandbox: &Sandbox,
    subtask_id: &str,
    generators: &[ToolProgram],
    validators: &[ToolProgram],
    params: &CollectParams,
) -> Result<Collection, TestgenError> {
    if generators.is_empty() || validators.is_empty() {
        return Err(SandboxError::InvalidInput("need at least one generator and one validator".into()).into());
    }
    let cap = params.target as u64 * params.attempt_factor.max(1) as u64;
    let total = validators.len() as u32;
    let batch = sandbox.pool().workers().max(1) as u64;
    let mut rng = seed::derived_rng(params.seed, &["testgen", subtask_id]);
    let mut seen = HashSet::new();
    let mut tests = Vec::with_capacity(params.target);
    let mut invocations = vec![0u64; generators.len()];
    let mut attempts = 0u64;

    while tests.len() < params.target {
        if attempts >= cap {
            return Err(TestgenError::AttemptCap {
                subtask_id: subtask_id.to_string(),
                attempts,
                accepted: tests.len(),
                target: params.target,
                rate: tests.len() as f64 / attempts.max(1) as f64,
            });
        }
        let plan: Vec<(u64, u64)> = (attempts..(attempts + batch).min(cap))
            .map(|a| (a, rng.random::<u64>()))
            .collect();
        let results = sandbox.par_map(&plan, |&(a, s)| -> Result<Attempt, SandboxError> {
            let g = &generators[(a % generators.len() as u64) as usize];
            let out = sandbox.run(&g.program, &[s.to_string()], b"", params.limits)?;
            if out.status != ExitStatus::Ok || out.stdout_truncated || out.stdout.is_empty() {
                return Ok(Attempt::Rejected);
            }
            let mut approvals = 0;
            for v in validators {
                if validator_approves(sandbox, &v.program, &out.stdout, params.limits)? {
                    approvals += 1;
                }
            }
            Ok(Attempt::Produced {
                input: out.stdout,
                approvals,
            })
        });
        for (&(a, s), result) in plan.iter().zip(results) {
            if tests.len() >= params.target {
                break;
            }
            attempts += 1;
            let gi = (a % generators.len() as u64) as usize;
            invocations[gi] += 1;
            if let Attempt::Produced { input, approvals } = result? {
                if !seen.insert(Digest::of(&input)) {
                    continue;
                }
                if approvals as f64 / total as f64 >= params.threshold {
                    tests.push(TestCase {
                        subtask_id: subtask_id.to_string(),
                        input,
                        generator_index: generators[gi].index,
                        seed: s,
                        approvals,
                        validators_total: total,
                    });
                }
            }
        }
    }
    Ok(Collection {
        tests,
        attempts,
        invocations,
    })
}

const INDEX_FILE: &str = "index.json";

fn index_err(path: &Path, e: impl std::fmt::Display) -> TestgenError {
    TestgenError::Index {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Writes `NNNNN.in` per test plus `index.json` with the metadata.
pub fn write_tests(dir: &Path, tests: &[TestCase]) -> Result<(), TestgenError> {
    fs::create_dir_all(dir).map_err(|e| index_err(dir, e))?;
    for (i, t) in tests.iter().enumerate() {
        let p = dir.join(format!("{i:05}.in"));
        fs::write(&p, &t.input).map_err(|e| index_err(&p, e))?;
    }
    let p = dir.join(INDEX_FILE);
    let json = serde_json::to_string_pretty(tests).map_err(|e| index_err(&p, e))?;
    fs::write(&p, json).map_err(|e| index_err(&p, e))
}

pub fn read_tests(dir: &Path) -> Result<Vec<TestCase>, TestgenError> {
    let p = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&p).map_err(|e| index_err(&p, e))?;
    let mut tests: Vec<TestCase> = serde_json::from_str(&text).map_err(|e| index_err(&p, e))?;
    for (i, t) in tests.iter_mut().enumerate() {
        let p = dir.join(format!("{i:05}.in"));
        t.input = fs::read(&p).map_err(|e| index_err(&p, e))?;
    }
    Ok(tests)
}
