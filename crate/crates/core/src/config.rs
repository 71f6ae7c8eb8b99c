//! Run configuration: method parameters plus backend and sandbox settings,
//! read from a single TOML file and overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ranking::{Granularity, StrategyName};

pub const DEFAULT_K_GENERATIONS: u32 = 50;
pub const DEFAULT_GAMES_PER_CLUSTER: u32 = 10;
pub const DEFAULT_NUM_GENERATORS: u32 = 100;
pub const DEFAULT_NUM_VALIDATORS: u32 = 100;
pub const DEFAULT_NUM_TESTS: u32 = 100;
pub const DEFAULT_VALIDATOR_THRESHOLD: f64 = 0.75;
pub const DEFAULT_MAX_TOKENS: u32 = 120_000;
pub const DEFAULT_SCORE_AT_K_RUNS: u32 = 20;
pub const DEFAULT_TOP_K: u32 = 50;
pub const DEFAULT_ATTEMPT_FACTOR: u32 = 50;
pub const DEFAULT_STDOUT_CAP: usize = 16 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Fully validated method parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Candidates generated per subtask.
    pub k_generations: u32,
    /// Tournament games initiated by each cluster.
    pub games_per_cluster: u32,
    pub num_generators: u32,
    pub num_validators: u32,
    pub num_tests: u32,
    pub validator_threshold: f64,
    pub max_tokens: u32,
    /// `None` leaves sampling temperature to the backend.
    pub temperature: Option<f64>,
    pub rng_seed: u64,
    pub strategy: StrategyName,
    pub random_granularity: Granularity,
    pub score_at_k_runs: u32,
    pub top_k: u32,
    /// Generator invocations allowed per requested test case.
    pub testgen_attempt_factor: u32,
    pub tool_time_limit_ms: u64,
    pub tool_memory_limit_mib: u64,
    /// Medal name and minimum total, checked in the listed order.
    pub medal_thresholds: Vec<MedalThreshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedalThreshold {
    pub name: String,
    pub min_total: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        validate_run_config(RawRunConfig::default()).expect("defaults are valid")
    }
}

/// Run parameters as written in a config file; every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRunConfig {
    pub k_generations: Option<u32>,
    pub games_per_cluster: Option<u32>,
    pub num_generators: Option<u32>,
    pub num_validators: Option<u32>,
    pub num_tests: Option<u32>,
    pub validator_threshold: Option<f64>,
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
    pub rng_seed: Option<u64>,
    pub strategy: Option<String>,
    pub random_granularity: Option<Granularity>,
    pub score_at_k_runs: Option<u32>,
    pub top_k: Option<u32>,
    pub testgen_attempt_factor: Option<u32>,
    pub tool_time_limit_ms: Option<u64>,
    pub tool_memory_limit_mib: Option<u64>,
    pub medal_thresholds: Option<Vec<MedalThreshold>>,
}

fn positive<T: Copy + PartialOrd + Default>(
    field: &'static str,
    value: Option<T>,
    default: T,
) -> Result<T, ConfigError> {
    let v = value.unwrap_or(default);
    if v <= T::default() {
        return Err(invalid(field, "must be >= 1"));
    }
    Ok(v)
}

/// Fills defaults and rejects out-of-range fields.
pub fn validate_run_config(raw: RawRunConfig) -> Result<RunConfig, ConfigError> {
    let threshold = raw.validator_threshold.unwrap_or(DEFAULT_VALIDATOR_THRESHOLD);
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid("validator_threshold", format!("{threshold} is outside (0, 1]")));
    }
    if let Some(t) = raw.temperature {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid("temperature", "must be a finite value >= 0"));
        }
    }
    let strategy = match raw.strategy.as_deref() {
        None => StrategyName::GenCluster,
        Some(name) => name
            .parse()
            .map_err(|_| invalid("strategy", format!("unknown strategy {name:?}")))?,
    };
    let medal_thresholds = raw.medal_thresholds.unwrap_or_default();
    if medal_thresholds.iter().any(|m| !m.min_total.is_finite()) {
        return Err(invalid("medal_thresholds", "thresholds must be finite"));
    }
    Ok(RunConfig {
        k_generations: positive("k_generations", raw.k_generations, DEFAULT_K_GENERATIONS)?,
        games_per_cluster: positive(
            "games_per_cluster",
            raw.games_per_cluster,
            DEFAULT_GAMES_PER_CLUSTER,
        )?,
        num_generators: positive("num_generators", raw.num_generators, DEFAULT_NUM_GENERATORS)?,
        num_validators: positive("num_validators", raw.num_validators, DEFAULT_NUM_VALIDATORS)?,
        num_tests: positive("num_tests", raw.num_tests, DEFAULT_NUM_TESTS)?,
        validator_threshold: threshold,
        max_tokens: positive("max_tokens", raw.max_tokens, DEFAULT_MAX_TOKENS)?,
        temperature: raw.temperature,
        rng_seed: raw.rng_seed.unwrap_or(0),
        strategy,
        random_granularity: raw.random_granularity.unwrap_or_default(),
        score_at_k_runs: positive("score_at_k_runs", raw.score_at_k_runs, DEFAULT_SCORE_AT_K_RUNS)?,
        top_k: positive("top_k", raw.top_k, DEFAULT_TOP_K)?,
        testgen_attempt_factor: positive(
            "testgen_attempt_factor",
            raw.testgen_attempt_factor,
            DEFAULT_ATTEMPT_FACTOR,
        )?,
        tool_time_limit_ms: positive("tool_time_limit_ms", raw.tool_time_limit_ms, 10_000)?,
        tool_memory_limit_mib: positive("tool_memory_limit_mib", raw.tool_memory_limit_mib, 1024)?,
        medal_thresholds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL of an OpenAI-compatible endpoint, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub mock_script: Option<PathBuf>,
    pub request_timeout_s: u64,
    pub max_attempts: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: "http://localhost:8000/v1".into(),
            model: "gpt-oss-120b".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            mock_script: None,
            request_timeout_s: 3600,
            max_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandboxConfig {
    pub workers: usize,
    pub scratch_dir: Option<PathBuf>,
    pub stdout_cap_bytes: usize,
    pub compiler: String,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            scratch_dir: None,
            stdout_cap_bytes: DEFAULT_STDOUT_CAP,
            compiler: "g++".into(),
        }
    }
}

/// The whole config file: `[run]`, `[backend]` and `[sandbox]` tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub run: RawRunConfig,
    pub backend: BackendConfig,
    pub sandbox: SandboxConfig,
}

impl ConfigFile {
    /// Parses a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let read_err = |reason: String| ConfigError::Read {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let mut cfg: ConfigFile = toml::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(script) = &cfg.backend.mock_script {
            if script.is_relative() {
                cfg.backend.mock_script = Some(base.join(script));
            }
        }
        Ok(cfg)
    }
}
