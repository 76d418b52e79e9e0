//! Sandboxed process execution with output capture and resource accounting.
//!
//! Every run gets a fresh private copy of the request's working directory
//! under the scratch root (`DV_SCRATCH`, default: system temp dir). The child
//! becomes the leader of its own process group so a timeout can kill
//! everything it spawned. CPU time and peak RSS come from `wait4` resource
//! usage at reap time.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::io::{self, Read, Write};
use std::os::unix::ffi::OsStrExt;
use std::os::unix::process::CommandExt;
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Per-stream capture cap; longer output is truncated but fully digested.
pub const CAPTURE_LIMIT: usize = 64 << 20;

pub const SCRATCH_ENV: &str = "DV_SCRATCH";

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("failed to spawn {exe}: {source}")]
    Spawn {
        exe: String,
        #[source]
        source: io::Error,
    },
    #[error("sandbox error at {path}: {source}")]
    Sandbox {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Clone, Debug)]
pub struct ExecRequest {
    pub exe_path: PathBuf,
    /// Overrides `argv[0]` as seen by the child.
    pub arg0: Option<OsString>,
    /// Arguments after `argv[0]`.
    pub argv: Vec<Vec<u8>>,
    pub stdin: Vec<u8>,
    pub env: BTreeMap<String, String>,
    /// Template directory copied into each sandbox; `None` starts empty.
    pub workdir: Option<PathBuf>,
    pub timeout_seconds: f64,
    pub capture_files: Vec<String>,
}

impl ExecRequest {
    pub fn new(exe_path: impl Into<PathBuf>) -> Self {
        ExecRequest {
            exe_path: exe_path.into(),
            arg0: None,
            argv: Vec::new(),
            stdin: Vec::new(),
            env: BTreeMap::new(),
            workdir: None,
            timeout_seconds: 10.0,
            capture_files: Vec::new(),
        }
    }

    pub fn args<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.argv = args.into_iter().map(|a| a.as_ref().to_vec()).collect();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Exited { code: i32 },
    Signaled { signal: i32 },
    TimedOut,
    /// The child never started (only recorded for non-first trials).
    SpawnFailed { message: String },
}

impl Termination {
    pub fn is_signaled(&self) -> bool {
        matches!(self, Termination::Signaled { .. })
    }

    pub fn is_timed_out(&self) -> bool {
        matches!(self, Termination::TimedOut)
    }

    pub fn is_exited(&self) -> bool {
        matches!(self, Termination::Exited { .. })
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Exited { code } => write!(f, "Exited({code})"),
            Termination::Signaled { signal } => write!(f, "Signaled({signal})"),
            Termination::TimedOut => f.write_str("TimedOut"),
            Termination::SpawnFailed { message } => write!(f, "SpawnFailed({message})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub exists: bool,
    #[serde(with = "hex::serde")]
    pub sha256: [u8; 32],
}

/// Captured bytes of one output stream plus the digest of the full stream.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCapture {
    #[serde(with = "crate::b64")]
    pub bytes: Vec<u8>,
    pub truncated: bool,
    pub total_len: u64,
    #[serde(with = "hex::serde")]
    pub sha256: [u8; 32],
}

impl StreamCapture {
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        let bytes = bytes.into();
        StreamCapture {
            sha256: Sha256::digest(&bytes).into(),
            total_len: bytes.len() as u64,
            truncated: false,
            bytes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub termination: Termination,
    pub stdout: StreamCapture,
    pub stderr: StreamCapture,
    pub file_digests: BTreeMap<String, FileDigest>,
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub peak_rss_bytes: u64,
}

impl ExecOutcome {
    /// An outcome with the given status and output and no resource usage.
    pub fn synthetic(termination: Termination, stdout: &[u8], stderr: &[u8]) -> Self {
        ExecOutcome {
            termination,
            stdout: StreamCapture::from_bytes(stdout),
            stderr: StreamCapture::from_bytes(stderr),
            file_digests: BTreeMap::new(),
            cpu_seconds: 0.0,
            wall_seconds: 0.0,
            peak_rss_bytes: 0,
        }
    }

    fn spawn_failed(message: String) -> Self {
        Self::synthetic(Termination::SpawnFailed { message }, b"", b"")
    }
}

pub fn scratch_root() -> PathBuf {
    std::env::var_os(SCRATCH_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir)
}

/// Relative path with no `..`, root or prefix components.
pub fn is_contained_relative(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn copy_tree(from: &Path, to: &Path) -> io::Result<()> {
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let ty = entry.file_type()?;
        let dest = to.join(entry.file_name());
        if ty.is_dir() {
            std::fs::create_dir(&dest)?;
            copy_tree(&entry.path(), &dest)?;
        } else if ty.is_symlink() {
            std::os::unix::fs::symlink(std::fs::read_link(entry.path())?, &dest)?;
        } else {
            std::fs::copy(entry.path(), &dest)?;
        }
    }
    Ok(())
}

fn make_sandbox(workdir: Option<&Path>) -> Result<tempfile::TempDir, ExecError> {
    let root = scratch_root();
    let sandbox_err = |path: &Path, source| ExecError::Sandbox { path: path.display().to_string(), source };
    let dir = tempfile::Builder::new()
        .prefix("dv-sandbox-")
        .tempdir_in(&root)
        .map_err(|e| sandbox_err(&root, e))?;
    if let Some(src) = workdir {
        copy_tree(src, dir.path()).map_err(|e| sandbox_err(src, e))?;
    }
    Ok(dir)
}

fn capture_stream<R: Read + Send + 'static>(mut r: R) -> thread::JoinHandle<StreamCapture> {
    thread::spawn(move || {
        let mut hasher = Sha256::new();
        let mut bytes = Vec::new();
        let mut total = 0u64;
        let mut buf = [0u8; 64 * 1024];
        loop {
            match r.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    hasher.update(&buf[..n]);
                    total += n as u64;
                    let room = CAPTURE_LIMIT.saturating_sub(bytes.len());
                    bytes.extend_from_slice(&buf[..n.min(room)]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        StreamCapture {
            truncated: total > bytes.len() as u64,
            total_len: total,
            sha256: hasher.finalize().into(),
            bytes,
        }
    })
}

struct Reaped {
    status: libc::c_int,
    usage: libc::rusage,
}

fn wait_child(pid: libc::pid_t) -> io::Result<Reaped> {
    loop {
        let mut status = 0;
        // SAFETY: rusage is plain old data; wait4 fills it in.
        let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
        let r = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
        if r == pid {
            return Ok(Reaped { status, usage });
        }
        let err = io::Error::last_os_error();
        if err.kind() != io::ErrorKind::Interrupted {
            return Err(err);
        }
    }
}

fn timeval_secs(tv: libc::timeval) -> f64 {
    tv.tv_sec as f64 + tv.tv_usec as f64 / 1e6
}

fn digest_file(path: &Path) -> FileDigest {
    match std::fs::read(path) {
        Ok(bytes) if path.is_file() => FileDigest { exists: true, sha256: Sha256::digest(&bytes).into() },
        _ => FileDigest { exists: false, sha256: [0; 32] },
    }
}

fn absolute(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(path)).unwrap_or_else(|_| path.to_path_buf())
    }
}

/// Runs the request once in a fresh sandbox.
pub fn run_once(req: &ExecRequest) -> Result<ExecOutcome, ExecError> {
    if !(req.timeout_seconds > 0.0) {
        return Err(ExecError::InvalidRequest("timeout_seconds must be > 0".into()));
    }
    if let Some(bad) = req.capture_files.iter().find(|p| !is_contained_relative(p)) {
        return Err(ExecError::InvalidRequest(format!("capture path {bad:?} escapes the sandbox")));
    }
    let sandbox = make_sandbox(req.workdir.as_deref())?;
    let exe = absolute(&req.exe_path);

    let mut cmd = Command::new(&exe);
    if let Some(arg0) = &req.arg0 {
        cmd.arg0(arg0);
    }
    cmd.args(req.argv.iter().map(|a| std::ffi::OsStr::from_bytes(a)))
        .current_dir(sandbox.path())
        .env_clear()
        .envs(&req.env)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: setpgid is async-signal-safe.
    unsafe {
        cmd.pre_exec(|| {
            if libc::setpgid(0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|source| ExecError::Spawn { exe: exe.display().to_string(), source })?;
    let pid = child.id() as libc::pid_t;

    let stdout = capture_stream(child.stdout.take().expect("piped stdout"));
    let stderr = capture_stream(child.stderr.take().expect("piped stderr"));
    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = req.stdin.clone();
    let feeder = thread::spawn(move || {
        // EPIPE is expected when the child ignores its input.
        let _ = stdin.write_all(&input);
    });

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let _ = tx.send(wait_child(pid));
    });
    let timeout = Duration::from_secs_f64(req.timeout_seconds);
    let (reaped, timed_out) = match rx.recv_timeout(timeout) {
        Ok(r) => (r, false),
        Err(_) => {
            // SAFETY: plain syscall on the group we created.
            unsafe { libc::killpg(pid, libc::SIGKILL) };
            (rx.recv().expect("waiter thread reports"), true)
        }
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    // Descendants left in the group would keep the output pipes open.
    unsafe { libc::killpg(pid, libc::SIGKILL) };
    drop(child);

    let reaped = reaped.map_err(|source| ExecError::Spawn { exe: exe.display().to_string(), source })?;
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    let _ = feeder.join();

    let status = reaped.status;
    let termination = if timed_out {
        Termination::TimedOut
    } else if libc::WIFEXITED(status) {
        Termination::Exited { code: libc::WEXITSTATUS(status) }
    } else if libc::WIFSIGNALED(status) {
        Termination::Signaled { signal: libc::WTERMSIG(status) }
    } else {
        Termination::Exited { code: status }
    };
    let file_digests = req
        .capture_files
        .iter()
        .map(|rel| (rel.clone(), digest_file(&sandbox.path().join(rel))))
        .collect();

    Ok(ExecOutcome {
        termination,
        stdout,
        stderr,
        file_digests,
        cpu_seconds: timeval_secs(reaped.usage.ru_utime) + timeval_secs(reaped.usage.ru_stime),
        wall_seconds,
        peak_rss_bytes: (reaped.usage.ru_maxrss.max(0) as u64) * 1024,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub n: usize,
    /// Trials that exited normally; only these enter the statistics.
    pub counted: usize,
    pub mean_cpu_seconds: f64,
    pub mean_peak_rss_bytes: f64,
    pub stdev_cpu_seconds: f64,
    pub stdev_peak_rss_bytes: f64,
    pub outcomes: Vec<ExecOutcome>,
}

impl TrialSummary {
    pub fn from_outcomes(outcomes: Vec<ExecOutcome>) -> Self {
        let counted: Vec<&ExecOutcome> =
            outcomes.iter().filter(|o| o.termination.is_exited()).collect();
        let cpu: Vec<f64> = counted.iter().map(|o| o.cpu_seconds).collect();
        let rss: Vec<f64> = counted.iter().map(|o| o.peak_rss_bytes as f64).collect();
        let (mean_cpu_seconds, stdev_cpu_seconds) = mean_and_population_stdev(&cpu);
        let (mean_peak_rss_bytes, stdev_peak_rss_bytes) = mean_and_population_stdev(&rss);
        TrialSummary {
            n: outcomes.len(),
            counted: counted.len(),
            mean_cpu_seconds,
            mean_peak_rss_bytes,
            stdev_cpu_seconds,
            stdev_peak_rss_bytes,
            outcomes,
        }
    }

    /// Trials that crashed, timed out or never started.
    pub fn flagged(&self) -> usize {
        self.n - self.counted
    }
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn mean_and_population_stdev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `n` sequential trials. Only a spawn failure on the first trial is an
/// error; later ones are recorded as `SpawnFailed` outcomes.
pub fn run_trials(req: &ExecRequest, n: usize) -> Result<TrialSummary, ExecError> {
    if n == 0 {
        return Err(ExecError::InvalidRequest("trial count must be >= 1".into()));
    }
    let mut outcomes = Vec::with_capacity(n);
    outcomes.push(run_once(req)?);
    for _ in 1..n {
        outcomes.push(run_once(req).unwrap_or_else(|e| ExecOutcome::spawn_failed(e.to_string())));
    }
    Ok(TrialSummary::from_outcomes(outcomes))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerfDelta {
    pub runtime_pct: f64,
    pub memory_pct: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum NotComparable {
    #[error("original {0} mean is zero")]
    ZeroBaseline(&'static str),
    #[error("no successful trials in {0}")]
    NoTrials(&'static str),
}

/// Variant means as a percentage of the original's; below 100 is a reduction.
pub fn perf_delta(original: &TrialSummary, variant: &TrialSummary) -> Result<PerfDelta, NotComparable> {
    if original.counted == 0 {
        return Err(NotComparable::NoTrials("original"));
    }
    if variant.counted == 0 {
        return Err(NotComparable::NoTrials("variant"));
    }
    if original.mean_cpu_seconds == 0.0 {
        return Err(NotComparable::ZeroBaseline("cpu"));
    }
    if original.mean_peak_rss_bytes == 0.0 {
        return Err(NotComparable::ZeroBaseline("memory"));
    }
    Ok(PerfDelta {
        runtime_pct: 100.0 * variant.mean_cpu_seconds / original.mean_cpu_seconds,
        memory_pct: 100.0 * variant.mean_peak_rss_bytes / original.mean_peak_rss_bytes,
    })
}
