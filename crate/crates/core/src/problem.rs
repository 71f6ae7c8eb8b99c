//! Problem packs: one directory per problem holding a `problem.toml`
//! manifest, a plain-text statement per subtask, optional grader sources and
//! official test files.
//!
//! ```text
//! pair-sum/
//!   problem.toml
//!   harness.cpp            # optional, linked with every candidate routine
//!   s1/statement.txt
//!   s1/grader.cpp          # optional, default is the built-in diff grader
//!   s1/tests/01.in
//!   s1/tests/01.out
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "problem.toml";
pub const DEFAULT_SUBMISSION_CAP: u32 = 50;
pub const DEFAULT_PROBLEM_TOTAL: f64 = 100.0;
const BUILTIN_DIFF: &str = "builtin:diff";
const SCORE_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum PackError {
    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },
    #[error("invalid pack field `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

impl PackError {
    fn ingestion(path: &Path, reason: impl ToString) -> Self {
        PackError::Ingestion {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        PackError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// How a subtask's submissions are scored against its official tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraderSource {
    /// Token-wise comparison of the solution output with the expected output.
    Diff,
    /// A checker program invoked as `grader <input> <expected> <actual>` that
    /// prints a score fraction in [0, 1] as its first output token.
    Program(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfficialTest {
    pub name: String,
    pub input: Vec<u8>,
    pub expected: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub subtask_id: String,
    pub index: u32,
    /// Statement with all other-subtask information removed.
    pub statement: String,
    pub max_score: f64,
    pub time_limit: Duration,
    pub memory_limit_mib: u64,
    pub grader: GraderSource,
    pub official_tests: Vec<OfficialTest>,
}

impl Subtask {
    pub fn memory_limit_bytes(&self) -> u64 {
        self.memory_limit_mib * 1024 * 1024
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemPack {
    pub problem_id: String,
    pub title: String,
    pub subtasks: Vec<Subtask>,
    pub submission_cap: u32,
    /// Explicit override for packs whose subtask scores do not sum to 100.
    pub problem_total: Option<f64>,
    /// Reserved: the pipeline treats every subtask as executable code.
    pub output_only: bool,
    /// Routine harness providing `main`; candidates are compiled together with it.
    pub harness: Option<String>,
}

impl ProblemPack {
    pub fn total_points(&self) -> f64 {
        self.problem_total.unwrap_or(DEFAULT_PROBLEM_TOTAL)
    }

    pub fn subtask(&self, subtask_id: &str) -> Option<&Subtask> {
        self.subtasks.iter().find(|s| s.subtask_id == subtask_id)
    }

    /// Checks every pack invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), PackError> {
        if self.problem_id.trim().is_empty() {
            return Err(PackError::invalid("problem_id", "must be non-empty"));
        }
        if self.submission_cap == 0 {
            return Err(PackError::invalid("submission_cap", "must be > 0"));
        }
        if self.subtasks.is_empty() {
            return Err(PackError::invalid("subtasks", "at least one subtask required"));
        }
        let mut ids = BTreeSet::new();
        let mut previous = 0;
        for (pos, s) in self.subtasks.iter().enumerate() {
            let field = |name: &str| format!("subtasks[{pos}].{name}");
            if s.index == 0 {
                return Err(PackError::invalid(field("index"), "indices start at 1"));
            }
            if s.index == previous {
                return Err(PackError::invalid(
                    field("index"),
                    format!("duplicate subtask index {}", s.index),
                ));
            }
            if s.index < previous {
                return Err(PackError::invalid(
                    field("index"),
                    format!("index {} follows {}; indices must increase", s.index, previous),
                ));
            }
            previous = s.index;
            if s.subtask_id.trim().is_empty() {
                return Err(PackError::invalid(field("id"), "must be non-empty"));
            }
            if !ids.insert(s.subtask_id.as_str()) {
                return Err(PackError::invalid(
                    field("id"),
                    format!("duplicate subtask id {:?}", s.subtask_id),
                ));
            }
            if s.statement.trim().is_empty() {
                return Err(PackError::invalid(field("statement"), "statement is empty"));
            }
            if !(s.max_score >= 0.0) || !s.max_score.is_finite() {
                return Err(PackError::invalid(field("max_score"), "must be a finite value >= 0"));
            }
            if s.time_limit.is_zero() {
                return Err(PackError::invalid(field("time_limit_ms"), "must be > 0"));
            }
            if s.memory_limit_mib == 0 {
                return Err(PackError::invalid(field("memory_limit_mib"), "must be > 0"));
            }
        }
        let sum: f64 = self.subtasks.iter().map(|s| s.max_score).sum();
        let total = self.total_points();
        if (sum - total).abs() > SCORE_EPS {
            let field = if self.problem_total.is_some() { "problem_total" } else { "max_score" };
            return Err(PackError::invalid(
                field,
                format!("subtask scores sum to {sum}, expected {total}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    problem_id: String,
    title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    submission_cap: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    problem_total: Option<f64>,
    #[serde(default)]
    output_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    harness: Option<String>,
    #[serde(default, rename = "subtasks")]
    subtasks: Vec<SubtaskEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubtaskEntry {
    id: String,
    index: u32,
    statement: String,
    max_score: f64,
    time_limit_ms: u64,
    memory_limit_mib: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grader: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tests: Option<String>,
}

fn read_text(path: &Path) -> Result<String, PackError> {
    fs::read_to_string(path).map_err(|e| PackError::ingestion(path, e))
}

fn read_tests(dir: &Path) -> Result<Vec<OfficialTest>, PackError> {
    let entries = fs::read_dir(dir).map_err(|e| PackError::ingestion(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PackError::ingestion(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext == "in") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let input_path = dir.join(format!("{name}.in"));
            let expected_path = dir.join(format!("{name}.out"));
            let input = fs::read(&input_path).map_err(|e| PackError::ingestion(&input_path, e))?;
            let expected =
                fs::read(&expected_path).map_err(|e| PackError::ingestion(&expected_path, e))?;
            Ok(OfficialTest { name, input, expected })
        })
        .collect()
}

/// Loads and validates one problem directory.
pub fn load_problem_pack(dir: &Path) -> Result<ProblemPack, PackError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(PackError::ingestion(&manifest_path, "missing manifest"));
    }
    let text = read_text(&manifest_path)?;
    let manifest: ManifestFile =
        toml::from_str(&text).map_err(|e| PackError::ingestion(&manifest_path, e))?;

    let harness = manifest
        .harness
        .as_deref()
        .map(|rel| read_text(&dir.join(rel)))
        .transpose()?;

    let mut subtasks = Vec::with_capacity(manifest.subtasks.len());
    for entry in manifest.subtasks {
        let statement = read_text(&dir.join(&entry.statement))?;
        let grader = match entry.grader.as_deref() {
            None | Some(BUILTIN_DIFF) => GraderSource::Diff,
            Some(rel) => GraderSource::Program(read_text(&dir.join(rel))?),
        };
        let official_tests = match entry.tests.as_deref() {
            Some(rel) => read_tests(&dir.join(rel))?,
            None => Vec::new(),
        };
        subtasks.push(Subtask {
            subtask_id: entry.id,
            index: entry.index,
            statement,
            max_score: entry.max_score,
            time_limit: Duration::from_millis(entry.time_limit_ms),
            memory_limit_mib: entry.memory_limit_mib,
            grader,
            official_tests,
        });
    }

    let pack = ProblemPack {
        problem_id: manifest.problem_id,
        title: manifest.title,
        subtasks,
        submission_cap: manifest.submission_cap.unwrap_or(DEFAULT_SUBMISSION_CAP),
        problem_total: manifest.problem_total,
        output_only: manifest.output_only,
        harness,
    };
    pack.validate()?;
    Ok(pack)
}

/// Loads either a single problem directory or a directory whose immediate
/// subdirectories are problem directories (sorted by name).
pub fn load_contest(dir: &Path) -> Result<Vec<ProblemPack>, PackError> {
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![load_problem_pack(dir)?]);
    }
    let entries = fs::read_dir(dir).map_err(|e| PackError::ingestion(dir, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PackError::ingestion(&dir.join(MANIFEST_FILE), "missing manifest"));
    }
    let packs = dirs
        .iter()
        .map(|d| load_problem_pack(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids = BTreeSet::new();
    for p in &packs {
        if !ids.insert(p.problem_id.as_str()) {
            return Err(PackError::invalid(
                "problem_id",
                format!("duplicate problem id {:?}", p.problem_id),
            ));
        }
    }
    Ok(packs)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PackError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PackError::ingestion(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| PackError::ingestion(path, e))
}

/// Writes `pack` in the canonical directory layout.
pub fn save_problem_pack(pack: &ProblemPack, dir: &Path) -> Result<(), PackError> {
    pack.validate()?;
    let mut manifest = ManifestFile {
        problem_id: pack.problem_id.clone(),
        title: pack.title.clone(),
        submission_cap: Some(pack.submission_cap),
        problem_total: pack.problem_total,
        output_only: pack.output_only,
        harness: None,
        subtasks: Vec::new(),
    };
    if let Some(harness) = &pack.harness {
        write(&dir.join("harness.cpp"), harness.as_bytes())?;
        manifest.harness = Some("harness.cpp".into());
    }
    for s in &pack.subtasks {
        let base = format!("s{}", s.index);
        write(&dir.join(&base).join("statement.txt"), s.statement.as_bytes())?;
        let grader = match &s.grader {
            GraderSource::Diff => None,
            GraderSource::Program(src) => {
                let rel = format!("{base}/grader.cpp");
                write(&dir.join(&rel), src.as_bytes())?;
                Some(rel)
            }
        };
        let tests = if s.official_tests.is_empty() {
            None
        } else {
            let rel = format!("{base}/tests");
            for t in &s.official_tests {
                write(&dir.join(&rel).join(format!("{}.in", t.name)), &t.input)?;
                write(&dir.join(&rel).join(format!("{}.out", t.name)), &t.expected)?;
            }
            Some(rel)
        };
        manifest.subtasks.push(SubtaskEntry {
            id: s.subtask_id.clone(),
            index: s.index,
            statement: format!("{base}/statement.txt"),
            max_score: s.max_score,
            time_limit_ms: s.time_limit.as_millis() as u64,
            memory_limit_mib: s.memory_limit_mib,
            grader,
            tests,
        });
    }
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| PackError::ingestion(&dir.join(MANIFEST_FILE), e))?;
    write(&dir.join(MANIFEST_FILE), text.as_bytes())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn subtask(index: u32, max_score: f64) -> Subtask {
        Subtask {
            subtask_id: format!("t-s{index}"),
            index,
            statement: format!("Statement of subtask {index}"),
            max_score,
            time_limit: Duration::from_millis(1000),
            memory_limit_mib: 256,
            grader: GraderSource::Diff,
            official_tests: vec![OfficialTest {
                name: "01".into(),
                input: b"1 2\n".to_vec(),
                expected: b"3\n".to_vec(),
            }],
        }
    }

    pub fn pack(scores: &[f64]) -> ProblemPack {
        ProblemPack {
            problem_id: "t".into(),
            title: "Test problem".into(),
            subtasks: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| subtask(i as u32 + 1, s))
                .collect(),
            submission_cap: DEFAULT_SUBMISSION_CAP,
            problem_total: None,
            output_only: false,
            harness: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::pack;
    use super::*;
    use proptest::prelude::*;

    fn assert_field(err: PackError, expected: &str) {
        match err {
            PackError::Validation { field, .. } => assert!(
                field.contains(expected),
                "field {field:?} should mention {expected:?}"
            ),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn minimal_pack_defaults_cap_to_50() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"
problem_id = "one"
title = "One"
[[subtasks]]
id = "one-s1"
index = 1
statement = "s1.txt"
max_score = 100
time_limit_ms = 1000
memory_limit_mib = 256
"#,
        )
        .unwrap();
        fs::write(dir.path().join("s1.txt"), "Do the thing.").unwrap();
        let p = load_problem_pack(dir.path()).unwrap();
        assert_eq!(p.subtasks.len(), 1);
        assert_eq!(p.submission_cap, 50);
        assert_eq!(p.subtasks[0].grader, GraderSource::Diff);
    }

    #[test]
    fn scores_summing_to_100_accepted() {
        pack(&[10.0, 25.0, 65.0]).validate().unwrap();
    }

    #[test]
    fn scores_not_summing_need_override() {
        let mut p = pack(&[10.0, 20.0]);
        assert_field(p.validate().unwrap_err(), "max_score");
        p.problem_total = Some(30.0);
        p.validate().unwrap();
    }

    #[test]
    fn duplicate_index_rejected() {
        let mut p = pack(&[50.0, 25.0, 25.0]);
        p.subtasks[2].index = 2;
        assert_field(p.validate().unwrap_err(), "subtasks[2].index");
    }

    #[test]
    fn empty_statement_rejected() {
        let mut p = pack(&[100.0]);
        p.subtasks[0].statement = "  \n".into();
        assert_field(p.validate().unwrap_err(), "statement");
    }

    #[test]
    fn bad_limits_rejected() {
        let mut p = pack(&[100.0]);
        p.subtasks[0].time_limit = Duration::ZERO;
        assert_field(p.validate().unwrap_err(), "time_limit_ms");
        let mut p = pack(&[100.0]);
        p.subtasks[0].memory_limit_mib = 0;
        assert_field(p.validate().unwrap_err(), "memory_limit_mib");
        let mut p = pack(&[100.0]);
        p.submission_cap = 0;
        assert_field(p.validate().unwrap_err(), "submission_cap");
    }

    #[test]
    fn missing_manifest_is_ingestion_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_problem_pack(dir.path()),
            Err(PackError::Ingestion { .. })
        ));
    }

    #[test]
    fn contest_directory_loads_sorted() {
        let root = tempfile::tempdir().unwrap();
        for id in ["b", "a"] {
            let mut p = pack(&[100.0]);
            p.problem_id = id.into();
            save_problem_pack(&p, &root.path().join(id)).unwrap();
        }
        let packs = load_contest(root.path()).unwrap();
        let ids: Vec<_> = packs.iter().map(|p| p.problem_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    fn arb_pack() -> impl Strategy<Value = ProblemPack> {
        let subtask = (
            "[a-z][a-z0-9]{0,6}",
            "[ -~]{1,40}",
            1u64..5000,
            1u64..2048,
            proptest::option::of("[ -~\n]{1,60}"),
            proptest::collection::vec(
                (proptest::collection::vec(any::<u8>(), 0..20), proptest::collection::vec(any::<u8>(), 0..20)),
                0..3,
            ),
        );
        (
            proptest::collection::vec(subtask, 1..5),
            proptest::option::of("[ -~\n]{1,80}"),
            1u32..60,
            any::<bool>(),
        )
            .prop_map(|(subs, harness, cap, output_only)| {
                let n = subs.len();
                let subtasks = subs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (id, stmt, tl, ml, grader, tests))| Subtask {
                        subtask_id: format!("{id}{i}"),
                        index: 2 * i as u32 + 1,
                        statement: format!("x{stmt}"),
                        max_score: if i + 1 == n { 100.0 - 5.0 * (n - 1) as f64 } else { 5.0 },
                        time_limit: Duration::from_millis(tl),
                        memory_limit_mib: ml,
                        grader: grader.map_or(GraderSource::Diff, GraderSource::Program),
                        official_tests: tests
                            .into_iter()
                            .enumerate()
                            .map(|(j, (input, expected))| OfficialTest {
                                name: format!("{j:02}"),
                                input,
                                expected,
                            })
                            .collect(),
                    })
                    .collect();
                ProblemPack {
                    problem_id: "rt".into(),
                    title: "Round trip".into(),
                    subtasks,
                    submission_cap: cap,
                    problem_total: None,
                    output_only,
                    harness,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn save_then_load_is_identity(p in arb_pack()) {
            let dir = tempfile::tempdir().unwrap();
            save_problem_pack(&p, dir.path()).unwrap();
            let back = load_problem_pack(dir.path()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
