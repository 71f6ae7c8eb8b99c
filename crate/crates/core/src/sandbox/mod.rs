//! Compilation and limited execution of C++ programs.
//!
//! Every run gets a fresh scratch directory, CPU/data/stack/file-size
//! rlimits, a wall-clock deadline enforced by killing the process group, and
//! (where the kernel supports it) a Landlock ruleset that confines writes to
//! the scratch directory and denies TCP.

mod grade;
mod landlock;
mod run;

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::SandboxConfig;
use crate::digest::{Digest, DigestBuilder};
use crate::par::WorkerPool;

pub use grade::{diff_tokens, grade, GradeResult, Grader};
pub use landlock::abi_version as landlock_abi;
pub use run::{ExecutionOutcome, ExitStatus, Limits};

/// Compiler flags shared by every program kind; recorded in run metadata.
pub const COMPILE_FLAGS: &[&str] = &["-std=gnu++17", "-O2", "-pipe"];
const COMPILE_TIMEOUT: Duration = Duration::from_secs(120);
const LOG_CAP: usize = 64 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("sandbox environment error: {0}")]
    Environment(String),
    #[error("invalid sandbox request: {0}")]
    InvalidInput(String),
}

impl SandboxError {
    fn env(context: &str, e: impl std::fmt::Display) -> Self {
        SandboxError::Environment(format!("{context}: {e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramKind {
    Solution,
    Generator,
    Validator,
    Grader,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledProgram {
    pub source_hash: Digest,
    /// Present iff `compile_ok`.
    #[serde(skip)]
    pub binary: Option<PathBuf>,
    pub compile_ok: bool,
    pub compile_log: String,
}

/// Shared compile cache plus run scratch space and a worker pool.
pub struct Sandbox {
    scratch_root: PathBuf,
    bin_dir: PathBuf,
    compiler: String,
    stdout_cap: usize,
    pool: WorkerPool,
    cache: Mutex<HashMap<Digest, Arc<OnceLock<Result<CompiledProgram, String>>>>>,
    counter: AtomicU64,
    _tempdir: Option<tempfile::TempDir>,
}

impl Sandbox {
    pub fn new(cfg: &SandboxConfig) -> Result<Self, SandboxError> {
        let (scratch_root, tempdir) = match &cfg.scratch_dir {
            Some(dir) => (dir.clone(), None),
            None => {
                let t = tempfile::Builder::new()
                    .prefix("tourney-scratch-")
                    .tempdir()
                    .map_err(|e| SandboxError::env("creating scratch dir", e))?;
                (t.path().to_path_buf(), Some(t))
            }
        };
        let bin_dir = scratch_root.join("bin");
        fs::create_dir_all(&bin_dir).map_err(|e| SandboxError::env("creating bin dir", e))?;
        let scratch_root = scratch_root
            .canonicalize()
            .map_err(|e| SandboxError::env("resolving scratch dir", e))?;
        let bin_dir = scratch_root.join("bin");
        let pool = WorkerPool::new(cfg.workers);
        if landlock::abi_version() < 1 {
            log::warn!("landlock unavailable; runs are not filesystem-confined");
        }
        Ok(Sandbox {
            scratch_root,
            bin_dir,
            compiler: cfg.compiler.clone(),
            stdout_cap: cfg.stdout_cap_bytes.max(1),
            pool,
            cache: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
            _tempdir: tempdir,
        })
    }

    pub fn stdout_cap(&self) -> usize {
        self.stdout_cap
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }

    /// Maps `f` over `items` on the worker pool, keeping input order.
    pub fn par_map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.map(items, f)
    }

    fn fresh_dir(&self, prefix: &str) -> Result<PathBuf, SandboxError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let dir = self.scratch_root.join(format!("{prefix}-{n}"));
        fs::create_dir_all(&dir).map_err(|e| SandboxError::env("creating run dir", e))?;
        Ok(dir)
    }

    /// Compiles a candidate routine together with the pack's harness stub.
    pub fn compile_solution(
        &self,
        routine: &str,
        harness: Option<&str>,
    ) -> Result<CompiledProgram, SandboxError> {
        match harness {
            Some(h) => self.compile(&format!("{routine}\n\n{h}"), ProgramKind::Solution),
            None => self.compile(routine, ProgramKind::Solution),
        }
    }

    /// Compiles `source` with fixed flags. Results are cached by source hash.
    pub fn compile(&self, source: &str, kind: ProgramKind) -> Result<CompiledProgram, SandboxError> {
        if source.trim().is_empty() {
            return Err(SandboxError::InvalidInput("empty source".into()));
        }
        let mut b = DigestBuilder::new();
        b.part(self.compiler.as_bytes());
        for flag in COMPILE_FLAGS {
            b.part(flag.as_bytes());
        }
        b.part(source.as_bytes());
        let hash = b.finish();

        let cell = {
            let mut cache = self.cache.lock().expect("compile cache poisoned");
            cache.entry(hash).or_default().clone()
        };
        cell.get_or_init(|| self.compile_uncached(source, hash, kind))
            .clone()
            .map_err(SandboxError::Environment)
    }

    fn compile_uncached(
        &self,
        source: &str,
        hash: Digest,
        kind: ProgramKind,
    ) -> Result<CompiledProgram, String> {
        let binary = self.bin_dir.join(hash.to_hex());
        let fail_log = self.bin_dir.join(format!("{}.fail", hash.to_hex()));
        if binary.is_file() {
            return Ok(CompiledProgram {
                source_hash: hash,
                binary: Some(binary),
                compile_ok: true,
                compile_log: String::new(),
            });
        }
        if let Ok(log) = fs::read_to_string(&fail_log) {
            return Ok(CompiledProgram {
                source_hash: hash,
                binary: None,
                compile_ok: false,
                compile_log: log,
            });
        }

        let dir = self.fresh_dir("compile").map_err(|e| e.to_string())?;
        let result = (|| {
            fs::write(dir.join("main.cpp"), source).map_err(|e| e.to_string())?;
            let mut child = Command::new(&self.compiler)
                .args(COMPILE_FLAGS)
                .args(["main.cpp", "-o", "prog"])
                .current_dir(&dir)
                .env("TMPDIR", &dir)
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::piped())
                .spawn()
                .map_err(|e| {
                    if e.kind() == io::ErrorKind::NotFound {
                        format!("compiler {:?} not found", self.compiler)
                    } else {
                        format!("spawning compiler: {e}")
                    }
                })?;
            let stderr = child.stderr.take().expect("piped stderr");
            let reader = std::thread::spawn(move || run::read_capped(stderr, LOG_CAP));
            let status = wait_with_deadline(&mut child, COMPILE_TIMEOUT).map_err(|e| e.to_string())?;
            let (log, _) = reader.join().unwrap_or_default();
            let log = String::from_utf8_lossy(&log).into_owned();
            let ok = matches!(status, Some(s) if s.success()) && dir.join("prog").is_file();
            if ok {
                fs::rename(dir.join("prog"), &binary).map_err(|e| e.to_string())?;
            } else {
                let log = if status.is_none() {
                    format!("{log}\ncompilation timed out")
                } else {
                    log
                };
                let _ = fs::write(&fail_log, &log);
                log::debug!("{kind:?} {} failed to compile", hash.short(12));
                return Ok(CompiledProgram {
                    source_hash: hash,
                    binary: None,
                    compile_ok: false,
                    compile_log: log,
                });
            }
            Ok(CompiledProgram {
                source_hash: hash,
                binary: Some(binary.clone()),
                compile_ok: true,
                compile_log: log,
            })
        })();
        let _ = fs::remove_dir_all(&dir);
        result
    }

    /// Runs a compiled program with `stdin` and the given limits.
    pub fn run(
        &self,
        program: &CompiledProgram,
        args: &[String],
        stdin: &[u8],
        limits: Limits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        let binary = match (&program.binary, program.compile_ok) {
            (Some(b), true) => b,
            _ => return Err(SandboxError::InvalidInput("program did not compile".into())),
        };
        let dir = self.fresh_dir("run")?;
        let outcome = run::execute(binary, args, stdin, limits, &dir, self.stdout_cap);
        let _ = fs::remove_dir_all(&dir);
        outcome
    }

    pub fn scratch_root(&self) -> &Path {
        &self.scratch_root
    }

    pub(crate) fn temp_dir(&self, prefix: &str) -> Result<PathBuf, SandboxError> {
        self.fresh_dir(prefix)
    }
}

fn wait_with_deadline(
    child: &mut std::process::Child,
    limit: Duration,
) -> io::Result<Option<std::process::ExitStatus>> {
    let start = std::time::Instant::now();
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if start.elapsed() > limit {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(None);
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}
