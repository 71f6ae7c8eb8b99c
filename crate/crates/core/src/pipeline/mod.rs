//! Staged, resumable orchestration with a content-addressed artifact store.
//!
//! ```text
//! <runs>/<run_id>/
//!   manifest.json          stage status + artifact digests
//!   objects/<digest>       JSON artifacts and raw test inputs
//!   tests/<subtask>/       accepted test inputs plus index.json
//!   report.txt, *.tsv      written by the report stage
//! ```

mod report;
mod stages;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{BackendConfig, BackendKind, RunConfig};
use crate::digest::Digest;
use crate::llm::{CompletionBackend, MockBackend, MockScript, OpenAiBackend, RetryPolicy};
use crate::problem::ProblemPack;
use crate::sandbox::Sandbox;

pub use report::{medal_for, render_report, AvgClusterStats, ReportArtifact};
pub use stages::{
    ClusterArtifact, ClusterSubtask, GenerateArtifact, RankArtifact, StoredTest, SubmitArtifact,
    TestgenArtifact, TestgenSubtask,
};
pub use sweep::{sweep, SweepParam, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Testgen,
    Cluster,
    Rank,
    Submit,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Generate,
        Stage::Testgen,
        Stage::Cluster,
        Stage::Rank,
        Stage::Submit,
        Stage::Report,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Testgen => "testgen",
            Stage::Cluster => "cluster",
            Stage::Rank => "rank",
            Stage::Submit => "submit",
            Stage::Report => "report",
        }
    }

    pub fn upstream(&self) -> &'static [Stage] {
        let pos = Stage::ALL.iter().position(|s| s == self).unwrap();
        &Stage::ALL[..pos]
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage {stage} cannot run: upstream stage {missing} is not done")]
    Ordering { stage: Stage, missing: Stage },
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("run store {path}: {reason}")]
    Store { path: PathBuf, reason: String },
    #[error("{0}")]
    Setup(String),
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Ordering { stage, .. } | PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn store_err(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Store {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub pack_ref: String,
    pub config: RunConfig,
    pub backend: String,
    pub stage_status: BTreeMap<Stage, StageStatus>,
    /// Stage → artifact path relative to the run directory.
    pub artifact_paths: BTreeMap<Stage, String>,
    pub diagnostics: BTreeMap<Stage, String>,
}

impl RunManifest {
    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stage_status.get(&stage).copied().unwrap_or(StageStatus::Pending)
    }

    pub fn artifact(&self, stage: Stage) -> Option<Digest> {
        self.artifact_paths
            .get(&stage)
            .and_then(|p| p.strip_prefix("objects/"))
            .and_then(|h| h.parse().ok())
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Content-addressed blobs under `objects/`.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
}

impl ArtifactStore {
    pub fn new(run_dir: &Path) -> Self {
        ArtifactStore {
            dir: run_dir.join("objects"),
        }
    }

    pub fn put_bytes(&self, bytes: &[u8]) -> Result<Digest, PipelineError> {
        let d = Digest::of(bytes);
        let path = self.dir.join(d.to_hex());
        if !path.exists() {
            fs::create_dir_all(&self.dir).map_err(|e| store_err(&self.dir, e))?;
            let tmp = self.dir.join(format!(".{}.tmp", d.to_hex()));
            fs::write(&tmp, bytes).map_err(|e| store_err(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| store_err(&path, e))?;
        }
        Ok(d)
    }

    pub fn get_bytes(&self, d: Digest) -> Result<Vec<u8>, PipelineError> {
        let path = self.dir.join(d.to_hex());
        fs::read(&path).map_err(|e| store_err(&path, e))
    }

    pub fn put_json<T: Serialize>(&self, value: &T) -> Result<Digest, PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| store_err(&self.dir, e))?;
        bytes.push(b'\n');
        self.put_bytes(&bytes)
    }

    pub fn get_json<T: DeserializeOwned>(&self, d: Digest) -> Result<T, PipelineError> {
        let bytes = self.get_bytes(d)?;
        serde_json::from_slice(&bytes).map_err(|e| store_err(&self.dir.join(d.to_hex()), e))
    }
}

/// Everything a stage needs besides the manifest.
pub struct Context<'a> {
    pub run_dir: PathBuf,
    pub packs: &'a [ProblemPack],
    pub backend: &'a dyn CompletionBackend,
    pub sandbox: &'a Sandbox,
    pub retry: RetryPolicy,
}

impl Context<'_> {
    pub fn store(&self) -> ArtifactStore {
        ArtifactStore::new(&self.run_dir)
    }

    pub fn subtask_ids(&self) -> Vec<String> {
        self.packs
            .iter()
            .flat_map(|p| p.subtasks.iter().map(|s| s.subtask_id.clone()))
            .collect()
    }
}

/// Deterministic id from the packs and config.
/// `backend` fingerprints the completion source (label plus, for the mock,
/// the script bytes) so a changed script does not resume a stale run.
pub fn default_run_id(packs: &[ProblemPack], config: &RunConfig, backend: &[u8]) -> String {
    let mut b = crate::digest::DigestBuilder::new();
    b.part(&serde_json::to_vec(packs).expect("packs serialize"));
    b.part(&serde_json::to_vec(config).expect("config serializes"));
    b.part(backend);
    format!("run-{}", b.finish().short(12))
}

/// Opens `<runs_dir>/<run_id>`, creating a fresh manifest if none exists.
/// An existing run must have been created with the same config.
pub fn open_run(
    runs_dir: &Path,
    run_id: &str,
    pack_ref: &str,
    config: &RunConfig,
    backend: &str,
) -> Result<(PathBuf, RunManifest), PipelineError> {
    let run_dir = runs_dir.join(run_id);
    let path = run_dir.join(MANIFEST_NAME);
    if path.exists() {
        let m = load_manifest(&run_dir)?;
        if &m.config != config {
            return Err(PipelineError::Setup(format!(
                "run {run_id} exists with a different configuration; choose another run id"
            )));
        }
        return Ok((run_dir, m));
    }
    fs::create_dir_all(&run_dir).map_err(|e| store_err(&run_dir, e))?;
    let m = RunManifest {
        run_id: run_id.to_string(),
        pack_ref: pack_ref.to_string(),
        config: config.clone(),
        backend: backend.to_string(),
        stage_status: Stage::ALL.iter().map(|s| (*s, StageStatus::Pending)).collect(),
        artifact_paths: BTreeMap::new(),
        diagnostics: BTreeMap::new(),
    };
    save_manifest(&run_dir, &m)?;
    Ok((run_dir, m))
}

pub fn load_manifest(run_dir: &Path) -> Result<RunManifest, PipelineError> {
    let path = run_dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| store_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| store_err(&path, e))
}

pub fn save_manifest(run_dir: &Path, m: &RunManifest) -> Result<(), PipelineError> {
    let path = run_dir.join(MANIFEST_NAME);
    let tmp = run_dir.join(".manifest.json.tmp");
    let mut text = serde_json::to_string_pretty(m).map_err(|e| store_err(&path, e))?;
    text.push('\n');
    fs::write(&tmp, text).map_err(|e| store_err(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| store_err(&path, e))
}

/// Runs one stage. A `done` stage is skipped unless `force`; forcing a stage
/// resets every downstream stage to pending.
pub fn run_stage(
    ctx: &Context<'_>,
    manifest: &mut RunManifest,
    stage: Stage,
    force: bool,
) -> Result<(), PipelineError> {
    for up in stage.upstream() {
        if manifest.status(*up) != StageStatus::Done {
            return Err(PipelineError::Ordering { stage, missing: *up });
        }
    }
    if manifest.status(stage) == StageStatus::Done && !force {
        log::info!("stage {stage} already done");
        return Ok(());
    }
    log::info!("stage {stage} starting");
    let result = stages::execute(ctx, manifest, stage);
    match result {
        Ok(digest) => {
            manifest.stage_status.insert(stage, StageStatus::Done);
            manifest.artifact_paths.insert(stage, format!("objects/{}", digest.to_hex()));
            manifest.diagnostics.remove(&stage);
            for down in Stage::ALL.iter().filter(|s| s.upstream().contains(&stage)) {
                if force {
                    manifest.stage_status.insert(*down, StageStatus::Pending);
                    manifest.artifact_paths.remove(down);
                }
            }
            save_manifest(&ctx.run_dir, manifest)?;
            log::info!("stage {stage} done");
            Ok(())
        }
        Err(message) => {
            manifest.stage_status.insert(stage, StageStatus::Failed);
            manifest.diagnostics.insert(stage, message.clone());
            save_manifest(&ctx.run_dir, manifest)?;
            Err(PipelineError::Stage { stage, message })
        }
    }
}

/// Runs every stage up to and including `last`.
pub fn run_through(
    ctx: &Context<'_>,
    manifest: &mut RunManifest,
    last: Stage,
    force: bool,
) -> Result<(), PipelineError> {
    for stage in Stage::ALL.iter().filter(|s| **s <= last) {
        // Only the requested stage is forced; upstream stages resume.
        run_stage(ctx, manifest, *stage, force && *stage == last)?;
    }
    Ok(())
}

pub fn build_backend(cfg: &BackendConfig) -> Result<Box<dyn CompletionBackend>, PipelineError> {
    match cfg.kind {
        BackendKind::Mock => {
            let path = cfg
                .mock_script
                .as_ref()
                .ok_or_else(|| PipelineError::Setup("mock backend needs a mock_script".into()))?;
            let script = MockScript::load(path).map_err(|e| PipelineError::Setup(e.to_string()))?;
            Ok(Box::new(MockBackend::new(script)))
        }
        BackendKind::Live => Ok(Box::new(OpenAiBackend::from_env(
            &cfg.base_url,
            &cfg.model,
            &cfg.api_key_env,
            std::time::Duration::from_secs(cfg.request_timeout_s),
        ))),
    }
}

/// Label plus mock script contents (when readable), for [`default_run_id`].
pub fn backend_fingerprint(cfg: &BackendConfig) -> Vec<u8> {
    let mut bytes = backend_label(cfg).into_bytes();
    if cfg.kind == BackendKind::Mock {
        if let Some(script) = cfg.mock_script.as_deref().and_then(|p| std::fs::read(p).ok()) {
            bytes.push(0);
            bytes.extend(script);
        }
    }
    bytes
}

pub fn backend_label(cfg: &BackendConfig) -> String {
    match cfg.kind {
        BackendKind::Mock => "mock".into(),
        BackendKind::Live => format!("live:{}", cfg.model),
    }
}
