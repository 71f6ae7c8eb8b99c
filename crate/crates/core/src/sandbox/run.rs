use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::landlock::Ruleset;
use super::SandboxError;

const STDERR_CAP: usize = 64 * 1024;
const FILE_SIZE_CAP: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub time: Duration,
    pub memory_bytes: u64,
}

impl Limits {
    pub fn new(time_ms: u64, memory_mib: u64) -> Self {
        Limits {
            time: Duration::from_millis(time_ms),
            memory_bytes: memory_mib * 1024 * 1024,
        }
    }

    /// Processes are killed once wall time exceeds this.
    pub fn wall_deadline(&self) -> Duration {
        self.time + self.time / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Ok,
    Nonzero,
    Timeout,
    MemoryExceeded,
    Crash,
}

#[derive(Debug, Clone)]
pub struct ExecutionOutcome {
    /// Whatever the program flushed, up to the stdout cap.
    pub stdout: Vec<u8>,
    pub stdout_truncated: bool,
    pub stderr: Vec<u8>,
    pub status: ExitStatus,
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub wall_time: Duration,
    pub cpu_time: Duration,
    pub peak_memory_bytes: u64,
}

impl ExecutionOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == ExitStatus::Ok
    }
}

/// Reads `r` to EOF, keeping at most `cap` bytes. Returns (bytes, truncated).
pub(crate) fn read_capped(mut r: impl Read, cap: usize) -> (Vec<u8>, bool) {
    let mut kept = Vec::new();
    let mut truncated = false;
    let mut buf = [0u8; 64 * 1024];
    loop {
        match r.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                if n > room {
                    truncated = true;
                }
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(_) => break,
        }
    }
    (kept, truncated)
}

struct Reaped {
    status: libc::c_int,
    usage: libc::rusage,
}

fn wait_pid(pid: libc::pid_t) -> io::Result<Reaped> {
    let mut status = 0;
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    loop {
        let rc = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
        if rc == pid {
            return Ok(Reaped { status, usage });
        }
        let err = io::Error::last_os_error();
        if err.kind() != io::ErrorKind::Interrupted {
            return Err(err);
        }
    }
}

fn timeval(tv: libc::timeval) -> Duration {
    Duration::from_secs(tv.tv_sec as u64) + Duration::from_micros(tv.tv_usec as u64)
}

fn set_limit(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) -> io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: soft,
        rlim_max: hard,
    };
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

pub(super) fn execute(
    binary: &Path,
    args: &[String],
    stdin: &[u8],
    limits: Limits,
    scratch: &Path,
    stdout_cap: usize,
) -> Result<ExecutionOutcome, SandboxError> {
    let ruleset = Ruleset::writable_beneath(scratch).map_err(|e| SandboxError::env("landlock", e))?;
    let cpu_secs = limits.time.as_secs() + 1;
    let memory = limits.memory_bytes;

    let mut cmd = Command::new(binary);
    cmd.args(args)
        .current_dir(scratch)
        .env_clear()
        .env("PATH", "/usr/bin:/bin")
        .env("TMPDIR", scratch)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            set_limit(libc::RLIMIT_CPU, cpu_secs, cpu_secs + 1)?;
            set_limit(libc::RLIMIT_DATA, memory, memory)?;
            set_limit(libc::RLIMIT_STACK, memory, memory)?;
            set_limit(libc::RLIMIT_FSIZE, FILE_SIZE_CAP, FILE_SIZE_CAP)?;
            set_limit(libc::RLIMIT_CORE, 0, 0)?;
            if let Some(r) = &ruleset {
                r.restrict_self()?;
            }
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        // The loader could not map the binary under the data limit.
        Err(e) if e.raw_os_error() == Some(libc::ENOMEM) => {
            return Ok(ExecutionOutcome {
                stdout: Vec::new(),
                stdout_truncated: false,
                stderr: e.to_string().into_bytes(),
                status: ExitStatus::MemoryExceeded,
                exit_code: None,
                signal: None,
                wall_time: start.elapsed(),
                cpu_time: Duration::ZERO,
                peak_memory_bytes: 0,
            })
        }
        Err(e) => return Err(SandboxError::env("spawning program", e)),
    };
    let pid = child.id() as libc::pid_t;

    let mut child_stdin = child.stdin.take().expect("piped stdin");
    let child_stdout = child.stdout.take().expect("piped stdout");
    let child_stderr = child.stderr.take().expect("piped stderr");
    let input = stdin.to_vec();
    let writer = std::thread::spawn(move || {
        let _ = child_stdin.write_all(&input);
    });
    let out_reader = std::thread::spawn(move || read_capped(child_stdout, stdout_cap));
    let err_reader = std::thread::spawn(move || read_capped(child_stderr, STDERR_CAP));

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(wait_pid(pid));
    });
    let (reaped, killed) = match rx.recv_timeout(limits.wall_deadline()) {
        Ok(r) => (r, false),
        Err(_) => {
            unsafe { libc::kill(-pid, libc::SIGKILL) };
            let r = rx
                .recv()
                .map_err(|_| SandboxError::Environment("waiter thread vanished".into()))?;
            (r, true)
        }
    };
    let wall_time = start.elapsed();
    let reaped = reaped.map_err(|e| SandboxError::env("waiting for program", e))?;
    // Leftover background processes would hold the pipes open.
    unsafe { libc::kill(-pid, libc::SIGKILL) };
    drop(child);

    let _ = writer.join();
    let (stdout, stdout_truncated) = out_reader.join().unwrap_or_default();
    let (stderr, _) = err_reader.join().unwrap_or_default();

    let status = std::process::ExitStatus::from_raw(reaped.status);
    let cpu_time = timeval(reaped.usage.ru_utime) + timeval(reaped.usage.ru_stime);
    let peak_memory_bytes = reaped.usage.ru_maxrss.max(0) as u64 * 1024;
    let signal = status.signal();
    let exit_code = status.code();

    let abnormal = signal.is_some() || exit_code != Some(0);
    let near_memory_limit = peak_memory_bytes.saturating_mul(5) >= memory.saturating_mul(4);
    let bad_alloc = String::from_utf8_lossy(&stderr).contains("bad_alloc");
    let exit = if killed || signal == Some(libc::SIGXCPU) || cpu_time > limits.time {
        ExitStatus::Timeout
    } else if peak_memory_bytes > memory || (abnormal && (near_memory_limit || bad_alloc)) {
        ExitStatus::MemoryExceeded
    } else if signal.is_some() {
        ExitStatus::Crash
    } else if exit_code != Some(0) {
        ExitStatus::Nonzero
    } else {
        ExitStatus::Ok
    };

    Ok(ExecutionOutcome {
        stdout,
        stdout_truncated,
        stderr,
        status: exit,
        exit_code,
        signal,
        wall_time,
        cpu_time,
        peak_memory_bytes,
    })
}
