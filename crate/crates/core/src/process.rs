//! Subprocess execution with a wall-clock deadline, an output cap and an
//! optional address-space limit.
//!
//! Every child is placed in its own process group so that a timeout kills
//! the whole tree (a `sh -c` wrapper and whatever it spawned), not just the
//! direct child.

use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

/// Default per-test wall limit, in seconds.
pub const DEFAULT_WALL_TIMEOUT_S: f64 = 120.0;

/// Default cap on captured stdout (and stderr), in bytes.
pub const DEFAULT_STDOUT_CAP: usize = 64 * 1024 * 1024;

const POLL_SLICE: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "default_wall")]
    pub wall_timeout_s: f64,
    /// `None` means unlimited.
    #[serde(default)]
    pub memory_bytes: Option<u64>,
    #[serde(default = "default_cap")]
    pub stdout_cap: usize,
}

fn default_wall() -> f64 {
    DEFAULT_WALL_TIMEOUT_S
}

fn default_cap() -> usize {
    DEFAULT_STDOUT_CAP
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            wall_timeout_s: DEFAULT_WALL_TIMEOUT_S,
            memory_bytes: None,
            stdout_cap: DEFAULT_STDOUT_CAP,
        }
    }
}

impl Limits {
    pub fn with_wall_timeout(mut self, seconds: f64) -> Self {
        self.wall_timeout_s = seconds;
        self
    }

    pub fn wall_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.wall_timeout_s.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Exited(i32),
    Signaled(i32),
    TimedOut,
    OutputLimit,
}

impl ExitKind {
    pub fn success(self) -> bool {
        self == ExitKind::Exited(0)
    }
}

impl std::fmt::Display for ExitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExitKind::Exited(code) => write!(f, "exit code {code}"),
            ExitKind::Signaled(sig) => write!(f, "killed by signal {sig}"),
            ExitKind::TimedOut => f.write_str("wall timeout"),
            ExitKind::OutputLimit => f.write_str("output limit exceeded"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecOutcome {
    pub exit: ExitKind,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub elapsed: Duration,
}

/// Builds `sh -c <script>`.
pub fn shell(script: &str) -> Command {
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(script);
    cmd
}

/// Single-quotes `s` for POSIX `sh`.
pub fn shell_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for ch in s.chars() {
        if ch == '\'' {
            out.push_str("'\\''");
        } else {
            out.push(ch);
        }
    }
    out.push('\'');
    out
}

/// Replaces each `{key}` in `template` with its value.
pub fn expand(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Runs `cmd` to completion, feeding `stdin` and enforcing `limits`.
pub fn run(mut cmd: Command, stdin: &[u8], limits: &Limits) -> io::Result<ExecOutcome> {
    cmd.stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(bytes) = limits.memory_bytes {
        // SAFETY: setrlimit is async-signal-safe and touches no shared state.
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id() as libc::pid_t;

    let input = stdin.to_vec();
    let mut child_stdin = child.stdin.take();
    let writer = thread::spawn(move || {
        if let Some(pipe) = child_stdin.as_mut() {
            // The child may exit without reading its input.
            let _ = pipe.write_all(&input);
        }
        drop(child_stdin);
    });

    let overflow = Arc::new(AtomicBool::new(false));
    let out_reader = spawn_capped_reader(child.stdout.take(), limits.stdout_cap, overflow.clone());
    let err_reader = spawn_capped_reader(child.stderr.take(), limits.stdout_cap, overflow.clone());

    let deadline = start + limits.wall_timeout();
    let exit = wait_with_deadline(&mut child, pgid, deadline, &overflow)?;
    let elapsed = start.elapsed();

    // Reap anything the child left behind in its group.
    kill_group(pgid);
    let _ = writer.join();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();

    Ok(ExecOutcome {
        exit,
        stdout,
        stderr,
        elapsed,
    })
}

fn wait_with_deadline(
    child: &mut Child,
    pgid: libc::pid_t,
    deadline: Instant,
    overflow: &AtomicBool,
) -> io::Result<ExitKind> {
    loop {
        if overflow.load(Ordering::Relaxed) {
            kill_group(pgid);
            child.wait()?;
            return Ok(ExitKind::OutputLimit);
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(pgid);
            child.wait()?;
            return Ok(ExitKind::TimedOut);
        }
        let slice = POLL_SLICE.min(deadline - now);
        if let Some(status) = child.wait_timeout(slice)? {
            if overflow.load(Ordering::Relaxed) {
                return Ok(ExitKind::OutputLimit);
            }
            return Ok(match (status.code(), status.signal()) {
                (Some(code), _) => ExitKind::Exited(code),
                (None, Some(sig)) => ExitKind::Signaled(sig),
                (None, None) => ExitKind::Exited(-1),
            });
        }
    }
}

fn kill_group(pgid: libc::pid_t) {
    // SAFETY: plain syscall; ESRCH for an already-empty group is ignored.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

fn spawn_capped_reader<R: Read + Send + 'static>(
    pipe: Option<R>,
    cap: usize,
    overflow: Arc<AtomicBool>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let Some(mut pipe) = pipe else {
            return buf;
        };
        let mut chunk = [0u8; 64 * 1024];
        loop {
            match pipe.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => {
                    if buf.len() + n > cap {
                        let keep = cap.saturating_sub(buf.len());
                        buf.extend_from_slice(&chunk[..keep]);
                        overflow.store(true, Ordering::Relaxed);
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        buf
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echoes_stdin() {
        let out = run(shell("cat"), b"hello\n", &Limits::default()).unwrap();
        assert_eq!(out.exit, ExitKind::Exited(0));
        assert_eq!(out.stdout, b"hello\n");
    }

    #[test]
    fn timeout_kills_the_whole_group() {
        let limits = Limits::default().with_wall_timeout(0.3);
        let start = Instant::now();
        let out = run(shell("sleep 30; echo late"), b"", &limits).unwrap();
        assert_eq!(out.exit, ExitKind::TimedOut);
        assert!(start.elapsed() < Duration::from_secs(5));
        assert!(out.stdout.is_empty());
    }

    #[test]
    fn output_cap_is_enforced() {
        let limits = Limits {
            stdout_cap: 1024,
            ..Limits::default()
        };
        let out = run(shell("yes"), b"", &limits).unwrap();
        assert_eq!(out.exit, ExitKind::OutputLimit);
        assert_eq!(out.stdout.len(), 1024);
    }

    #[test]
    fn nonzero_exit_is_reported() {
        let out = run(shell("echo oops >&2; exit 3"), b"", &Limits::default()).unwrap();
        assert_eq!(out.exit, ExitKind::Exited(3));
        assert_eq!(out.stderr, b"oops\n");
    }

    #[test]
    fn quoting_survives_the_shell() {
        let weird = "it's a \"path\" with $HOME";
        let out = run(
            shell(&format!("printf %s {}", shell_quote(weird))),
            b"",
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(out.stdout, weird.as_bytes());
    }

    #[test]
    fn expand_substitutes_every_occurrence() {
        let s = expand("{a} {b} {a}", &[("a", "x"), ("b", "y")]);
        assert_eq!(s, "x y x");
    }
}
