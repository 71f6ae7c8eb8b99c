use std::fs;

use serde::{Deserialize, Serialize};

use super::{CompiledProgram, ExitStatus, Limits, ProgramKind, Sandbox, SandboxError};
use crate::problem::{GraderSource, OfficialTest, Subtask};

const GRADER_TIME_MS: u64 = 10_000;
const GRADER_MEMORY_MIB: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeResult {
    pub subtask_id: String,
    /// Always within `[0, max_score]`.
    pub score: f64,
    pub verdict: String,
}

/// A compiled subtask grader.
pub enum Grader {
    Diff,
    Program(CompiledProgram),
}

impl Grader {
    pub fn for_subtask(sandbox: &Sandbox, subtask: &Subtask) -> Result<Grader, SandboxError> {
        match &subtask.grader {
            GraderSource::Diff => Ok(Grader::Diff),
            GraderSource::Program(src) => {
                let p = sandbox.compile(src, ProgramKind::Grader)?;
                if !p.compile_ok {
                    return Err(SandboxError::Environment(format!(
                        "grader for {} does not compile: {}",
                        subtask.subtask_id, p.compile_log
                    )));
                }
                Ok(Grader::Program(p))
            }
        }
    }
}

/// Whitespace-insensitive token comparison.
pub fn diff_tokens(expected: &[u8], actual: &[u8]) -> bool {
    expected
        .split(|b| b.is_ascii_whitespace())
        .filter(|t| !t.is_empty())
        .eq(actual.split(|b| b.is_ascii_whitespace()).filter(|t| !t.is_empty()))
}

enum TestScore {
    Fraction(f64),
    GraderError(String),
}

fn check(
    sandbox: &Sandbox,
    grader: &Grader,
    test: &OfficialTest,
    actual: &[u8],
) -> Result<TestScore, SandboxError> {
    let program = match grader {
        Grader::Diff => {
            return Ok(TestScore::Fraction(if diff_tokens(&test.expected, actual) { 1.0 } else { 0.0 }))
        }
        Grader::Program(p) => p,
    };
    let dir = sandbox.temp_dir("grade")?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| SandboxError::env("writing grader input", e))?;
        Ok::<_, SandboxError>(path.display().to_string())
    };
    let args = vec![
        write("input", &test.input)?,
        write("expected", &test.expected)?,
        write("actual", actual)?,
    ];
    let outcome = sandbox.run(program, &args, b"", Limits::new(GRADER_TIME_MS, GRADER_MEMORY_MIB));
    let _ = fs::remove_dir_all(&dir);
    let outcome = outcome?;
    if outcome.status != ExitStatus::Ok {
        return Ok(TestScore::GraderError(format!("grader exited with {:?}", outcome.status)));
    }
    let text = String::from_utf8_lossy(&outcome.stdout);
    match text.split_whitespace().next().and_then(|t| t.parse::<f64>().ok()) {
        Some(f) if (0.0..=1.0).contains(&f) => Ok(TestScore::Fraction(f)),
        _ => Ok(TestScore::GraderError(format!("unparseable grader output {:?}", text.trim()))),
    }
}

/// Runs `solution` over the official tests; the subtask score is the
/// minimum per-test fraction times `max_score` (a failing test zeroes it).
pub fn grade(
    sandbox: &Sandbox,
    solution: &CompiledProgram,
    subtask: &Subtask,
    grader: &Grader,
    official_tests: &[OfficialTest],
) -> Result<GradeResult, SandboxError> {
    let result = |score: f64, verdict: String| GradeResult {
        subtask_id: subtask.subtask_id.clone(),
        score: score.clamp(0.0, subtask.max_score),
        verdict,
    };
    if !solution.compile_ok {
        return Ok(result(0.0, "compile-error".into()));
    }
    if official_tests.is_empty() {
        return Ok(result(0.0, "no-tests".into()));
    }
    let limits = Limits {
        time: subtask.time_limit,
        memory_bytes: subtask.memory_limit_bytes(),
    };
    let mut worst = 1.0f64;
    let mut verdict = String::from("accepted");
    for test in official_tests {
        let out = sandbox.run(solution, &[], &test.input, limits)?;
        let fraction = if out.status != ExitStatus::Ok {
            verdict = format!("{:?} on test {}", out.status, test.name).to_lowercase();
            0.0
        } else {
            match check(sandbox, grader, test, &out.stdout)? {
                TestScore::Fraction(f) => f,
                TestScore::GraderError(msg) => {
                    log::warn!("grader error on {} test {}: {msg}", subtask.subtask_id, test.name);
                    return Ok(result(0.0, "grader-error".into()));
                }
            }
        };
        if fraction < worst {
            worst = fraction;
            if out.status == ExitStatus::Ok {
                verdict = if fraction == 0.0 {
                    format!("wrong answer on test {}", test.name)
                } else {
                    format!("partial on test {}", test.name)
                };
            }
        }
        if worst == 0.0 {
            break;
        }
    }
    Ok(result(worst * subtask.max_score, verdict))
}
