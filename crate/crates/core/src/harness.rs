//! Compile a program, run it over a test suite, gate on correctness and
//! collect per-test costs from a [`PerfBackend`].

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::perf::{MeasureRequest, PerfBackend, PerfMeasurement};
use crate::process::{self, ExecOutcome, ExitKind, Limits};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub index: usize,
    pub input: Vec<u8>,
    pub expected_output: Vec<u8>,
}

impl TestCase {
    pub fn new(index: usize, input: impl Into<Vec<u8>>, expected: impl Into<Vec<u8>>) -> Self {
        Self {
            index,
            input: input.into(),
            expected_output: expected.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("no test cases under {0}")]
    Empty(PathBuf),
    #[error("{dir}: input.{index}.txt has no matching output.{index}.txt")]
    MissingOutput { dir: PathBuf, index: usize },
    #[error("{dir}: test indices are not contiguous from 0 (found {found:?})")]
    Gap { dir: PathBuf, found: Vec<usize> },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Loads `<root>/<problem_id>/input.<k>.txt` and `output.<k>.txt`.
pub fn load_suite(root: &Path, problem_id: &str) -> Result<Vec<TestCase>, SuiteError> {
    let dir = root.join(problem_id);
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SuiteError::Io { path, source }
    };
    let mut indices = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let entry = entry.map_err(io_err(&dir))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(k) = name
            .strip_prefix("input.")
            .and_then(|rest| rest.strip_suffix(".txt"))
            .and_then(|k| k.parse::<usize>().ok())
        {
            indices.push(k);
        }
    }
    if indices.is_empty() {
        return Err(SuiteError::Empty(dir));
    }
    indices.sort_unstable();
    if indices.iter().enumerate().any(|(i, k)| i != *k) {
        return Err(SuiteError::Gap { dir, found: indices });
    }
    let mut suite = Vec::with_capacity(indices.len());
    for k in indices {
        let input_path = dir.join(format!("input.{k}.txt"));
        let output_path = dir.join(format!("output.{k}.txt"));
        if !output_path.exists() {
            return Err(SuiteError::MissingOutput { dir, index: k });
        }
        let input = fs::read(&input_path).map_err(io_err(&input_path))?;
        let expected = fs::read(&output_path).map_err(io_err(&output_path))?;
        suite.push(TestCase::new(k, input, expected));
    }
    Ok(suite)
}

/// How to turn a source file into something runnable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompileConfig {
    /// Shell command with `{src}`, `{out}` and optionally `{flags}`. When
    /// `{flags}` is absent the flags are appended.
    pub compiler_command: String,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default = "default_compile_timeout")]
    pub timeout_s: f64,
    /// File name the source is written to before compiling.
    #[serde(default = "default_source_file")]
    pub source_file: String,
}

fn default_compile_timeout() -> f64 {
    60.0
}

fn default_source_file() -> String {
    "main.cpp".into()
}

impl Default for CompileConfig {
    fn default() -> Self {
        Self {
            compiler_command: "g++ -std=c++17 {flags} {src} -o {out}".into(),
            flags: vec!["-O3".into()],
            timeout_s: default_compile_timeout(),
            source_file: default_source_file(),
        }
    }
}

impl CompileConfig {
    /// A "compiler" that copies an executable script into place. Handy for
    /// corpora of shell or Python programs and for tests.
    pub fn script(source_file: &str) -> Self {
        Self {
            compiler_command: "cp {src} {out} && chmod +x {out}".into(),
            flags: Vec::new(),
            timeout_s: 10.0,
            source_file: source_file.into(),
        }
    }

    fn render(&self, src: &Path, out: &Path) -> String {
        let flags = self
            .flags
            .iter()
            .map(|f| process::shell_quote(f))
            .collect::<Vec<_>>()
            .join(" ");
        let mut template = self.compiler_command.clone();
        if !template.contains("{flags}") && !flags.is_empty() {
            template.push(' ');
            template.push_str("{flags}");
        }
        process::expand(
            &template,
            &[
                ("src", &process::shell_quote(&src.to_string_lossy())),
                ("out", &process::shell_quote(&out.to_string_lossy())),
                ("flags", &flags),
            ],
        )
    }
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("compiler failed ({status}): {stderr}")]
    Failed { status: String, stderr: String },
    #[error("compiler timed out")]
    Timeout { stderr: String },
    #[error("compile i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CompileError {
    pub fn stderr(&self) -> &str {
        match self {
            CompileError::Failed { stderr, .. } | CompileError::Timeout { stderr } => stderr,
            CompileError::Io(_) => "",
        }
    }
}

/// A compiled, runnable program.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub program_id: String,
    pub path: PathBuf,
    /// sha256 of the artifact bytes.
    pub digest: String,
    /// Compiler stderr, kept for diagnostics even on success.
    pub compiler_stderr: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    WrongAnswer,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Judgement {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub program_id: String,
    pub compile_ok: bool,
    pub verdicts: Vec<Verdict>,
    pub measurements: Vec<Option<PerfMeasurement>>,
    pub total_runtime: Option<PerfMeasurement>,
    /// One entry per attempted test; `None` when there is nothing to say.
    pub diagnostics: Vec<Option<String>>,
}

impl RunReport {
    pub fn compile_failed(program_id: impl Into<String>, stderr: &str) -> Self {
        Self {
            program_id: program_id.into(),
            compile_ok: false,
            verdicts: Vec::new(),
            measurements: Vec::new(),
            total_runtime: None,
            diagnostics: vec![Some(format!("compile error: {stderr}"))],
        }
    }

    /// First diagnostic or verdict that explains a failure, for reject logs.
    pub fn failure_reason(&self) -> Option<String> {
        if !self.compile_ok {
            return Some(
                self.diagnostics
                    .first()
                    .cloned()
                    .flatten()
                    .unwrap_or_else(|| "compile error".into()),
            );
        }
        self.verdicts
            .iter()
            .zip(&self.diagnostics)
            .enumerate()
            .find(|(_, (v, _))| **v != Verdict::Pass)
            .map(|(i, (v, d))| match d {
                Some(d) => format!("test {i}: {v:?}: {d}"),
                None => format!("test {i}: {v:?}"),
            })
            .or_else(|| {
                self.total_runtime
                    .is_none()
                    .then(|| "no runtime recorded".to_string())
            })
    }
}

/// `Correct` iff the program compiled and passed every test.
pub fn judge(report: &RunReport) -> Judgement {
    if report.compile_ok
        && !report.verdicts.is_empty()
        && report.verdicts.iter().all(|v| *v == Verdict::Pass)
    {
        Judgement::Correct
    } else {
        Judgement::Incorrect
    }
}

/// Strips trailing whitespace from every line and drops trailing blank lines.
pub fn normalize_output(bytes: &[u8]) -> Vec<u8> {
    let mut lines: Vec<&[u8]> = bytes
        .split(|b| *b == b'\n')
        .map(|line| {
            let end = line
                .iter()
                .rposition(|b| !matches!(b, b' ' | b'\t' | b'\r'))
                .map_or(0, |p| p + 1);
            &line[..end]
        })
        .collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join(&b'\n')
}

pub fn outputs_match(actual: &[u8], expected: &[u8]) -> bool {
    normalize_output(actual) == normalize_output(expected)
}

/// Compiles and runs programs. Immutable once built and safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct Harness {
    compile: CompileConfig,
    limits: Limits,
    workers: usize,
    fail_fast: bool,
    persist_dir: Option<PathBuf>,
}

impl Harness {
    pub fn new(compile: CompileConfig, limits: Limits) -> Self {
        Self {
            compile,
            limits,
            workers: 1,
            fail_fast: false,
            persist_dir: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_fail_fast(mut self, fail_fast: bool) -> Self {
        self.fail_fast = fail_fast;
        self
    }

    /// Persist stdout/stderr/measurement under `<dir>/<program_id>/<test_index>/`.
    pub fn with_persist_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.persist_dir = Some(dir.into());
        self
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn compile_config(&self) -> &CompileConfig {
        &self.compile
    }

    /// Writes `source` under `workdir` and runs the configured compiler.
    pub fn compile(
        &self,
        program_id: &str,
        source: &str,
        workdir: &Path,
    ) -> Result<Artifact, CompileError> {
        let dir = workdir.join(dir_name(program_id));
        fs::create_dir_all(&dir)?;
        let src = dir.join(&self.compile.source_file);
        let out = dir.join("prog");
        fs::write(&src, source)?;
        if out.exists() {
            fs::remove_file(&out)?;
        }

        let limits = Limits {
            wall_timeout_s: self.compile.timeout_s,
            ..Limits::default()
        };
        let outcome = process::run(process::shell(&self.compile.render(&src, &out)), b"", &limits)?;
        let stderr = String::from_utf8_lossy(&outcome.stderr).into_owned();
        match outcome.exit {
            ExitKind::Exited(0) => {}
            ExitKind::TimedOut => return Err(CompileError::Timeout { stderr }),
            other => {
                return Err(CompileError::Failed {
                    status: other.to_string(),
                    stderr,
                })
            }
        }
        let bytes = fs::read(&out).map_err(|_| CompileError::Failed {
            status: "no output produced".into(),
            stderr: stderr.clone(),
        })?;
        Ok(Artifact {
            program_id: program_id.to_string(),
            path: out,
            digest: hex::encode(Sha256::digest(&bytes)),
            compiler_stderr: stderr,
        })
    }

    /// Runs the artifact once on `input` under the harness limits.
    pub fn execute(&self, artifact: &Artifact, input: &[u8]) -> std::io::Result<ExecOutcome> {
        process::run(std::process::Command::new(&artifact.path), input, &self.limits)
    }

    /// Runs every test, then measures the passing ones with `backend`.
    pub fn run_tests(
        &self,
        artifact: &Artifact,
        suite: &[TestCase],
        backend: &dyn PerfBackend,
    ) -> RunReport {
        let results: Vec<TestOutcome> = if self.fail_fast || self.workers <= 1 || suite.len() <= 1 {
            let mut out = Vec::with_capacity(suite.len());
            for case in suite {
                let r = self.run_one(artifact, case, backend);
                let failed = r.verdict != Verdict::Pass;
                out.push(r);
                if failed && self.fail_fast {
                    break;
                }
            }
            out
        } else {
            self.run_parallel(artifact, suite, backend)
        };

        let mut verdicts = Vec::with_capacity(results.len());
        let mut measurements = Vec::with_capacity(results.len());
        let mut diagnostics = Vec::with_capacity(results.len());
        for r in results {
            verdicts.push(r.verdict);
            measurements.push(r.measurement);
            diagnostics.push(r.diagnostic);
        }

        let all_pass = verdicts.len() == suite.len() && verdicts.iter().all(|v| *v == Verdict::Pass);
        let mut total_runtime = None;
        if all_pass && !suite.is_empty() {
            match PerfMeasurement::sum(measurements.iter().flatten()) {
                Ok(total) => total_runtime = total,
                Err(e) => {
                    // Mixed units from one backend; report rather than sum.
                    if let Some(last) = diagnostics.last_mut() {
                        *last = Some(e.to_string());
                    }
                    if let Some(last) = verdicts.last_mut() {
                        *last = Verdict::RuntimeError;
                    }
                    if let Some(last) = measurements.last_mut() {
                        *last = None;
                    }
                }
            }
        }

        RunReport {
            program_id: artifact.program_id.clone(),
            compile_ok: true,
            verdicts,
            measurements,
            total_runtime,
            diagnostics,
        }
    }

    /// Compile, then [`run_tests`](Self::run_tests). A compile failure gives
    /// a report with `compile_ok = false`.
    pub fn evaluate(
        &self,
        program_id: &str,
        source: &str,
        suite: &[TestCase],
        backend: &dyn PerfBackend,
        workdir: &Path,
    ) -> RunReport {
        match self.compile(program_id, source, workdir) {
            Ok(artifact) => self.run_tests(&artifact, suite, backend),
            Err(e) => RunReport::compile_failed(program_id, &e.to_string()),
        }
    }

    fn run_parallel(
        &self,
        artifact: &Artifact,
        suite: &[TestCase],
        backend: &dyn PerfBackend,
    ) -> Vec<TestOutcome> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<TestOutcome>>> = suite.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|scope| {
            for _ in 0..self.workers.min(suite.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(case) = suite.get(i) else { break };
                    let r = self.run_one(artifact, case, backend);
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| {
                s.into_inner()
                    .unwrap_or_else(|e| e.into_inner())
                    .expect("every slot is filled before the scope ends")
            })
            .collect()
    }

    fn run_one(&self, artifact: &Artifact, case: &TestCase, backend: &dyn PerfBackend) -> TestOutcome {
        let outcome = match self.execute(artifact, &case.input) {
            Ok(o) => o,
            Err(e) => {
                return TestOutcome::fail(Verdict::RuntimeError, format!("spawn failed: {e}"));
            }
        };
        let mut result = match outcome.exit {
            ExitKind::TimedOut => TestOutcome::fail(Verdict::Timeout, "wall limit exceeded".into()),
            ExitKind::OutputLimit => {
                TestOutcome::fail(Verdict::RuntimeError, "stdout exceeded the output cap".into())
            }
            ExitKind::Signaled(_) | ExitKind::Exited(_) if !outcome.exit.success() => {
                TestOutcome::fail(Verdict::RuntimeError, outcome.exit.to_string())
            }
            _ if !outputs_match(&outcome.stdout, &case.expected_output) => TestOutcome {
                verdict: Verdict::WrongAnswer,
                measurement: None,
                diagnostic: None,
            },
            _ => {
                let req = MeasureRequest {
                    program_id: &artifact.program_id,
                    artifact: Some(&artifact.path),
                    test_index: case.index,
                    input: &case.input,
                    limits: &self.limits,
                };
                match backend.measure(&req) {
                    Ok(m) => TestOutcome {
                        verdict: Verdict::Pass,
                        measurement: Some(m),
                        diagnostic: None,
                    },
                    Err(e) => TestOutcome::fail(
                        Verdict::RuntimeError,
                        format!("measurement failed [{}]: {e}", e.category()),
                    ),
                }
            }
        };
        if let Some(dir) = &self.persist_dir {
            if let Err(e) = persist(dir, artifact, case.index, &outcome, &result) {
                log::warn!("could not persist run artifacts: {e}");
                result.diagnostic.get_or_insert_with(|| format!("persist failed: {e}"));
            }
        }
        result
    }
}

#[derive(Debug)]
struct TestOutcome {
    verdict: Verdict,
    measurement: Option<PerfMeasurement>,
    diagnostic: Option<String>,
}

impl TestOutcome {
    fn fail(verdict: Verdict, diagnostic: String) -> Self {
        Self {
            verdict,
            measurement: None,
            diagnostic: Some(diagnostic),
        }
    }
}

fn persist(
    root: &Path,
    artifact: &Artifact,
    index: usize,
    outcome: &ExecOutcome,
    result: &TestOutcome,
) -> std::io::Result<()> {
    let dir = root.join(dir_name(&artifact.program_id)).join(index.to_string());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("stdout"), &outcome.stdout)?;
    fs::write(dir.join("stderr"), &outcome.stderr)?;
    let record = serde_json::json!({
        "verdict": result.verdict,
        "measurement": result.measurement,
        "diagnostic": result.diagnostic,
    });
    fs::write(dir.join("measurement.json"), serde_json::to_vec_pretty(&record)?)?;
    Ok(())
}

/// Filesystem-safe directory name for a program id.
fn dir_name(program_id: &str) -> String {
    let clean: String = program_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if clean == program_id && !clean.starts_with('.') {
        clean
    } else {
        let tag = hex::encode(&Sha256::digest(program_id.as_bytes())[..4]);
        format!("{clean}-{tag}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::ManifestBackend;
    use crate::process::DEFAULT_WALL_TIMEOUT_S;

    fn script_harness() -> Harness {
        Harness::new(CompileConfig::script("main.sh"), Limits::default())
    }

    fn echo_suite(n: usize) -> Vec<TestCase> {
        (0..n)
            .map(|i| TestCase::new(i, format!("line {i}\n"), format!("line {i}\n")))
            .collect()
    }

    fn manifest(id: &str, costs: &[f64]) -> ManifestBackend {
        let mut m = ManifestBackend::default();
        for (i, c) in costs.iter().enumerate() {
            m.insert(id, i, *c);
        }
        m
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_output(b"1 2  \r\n3\t\n\n\n"), b"1 2\n3");
        assert_eq!(normalize_output(b""), b"");
        assert!(outputs_match(b"a\n", b"a"));
        assert!(!outputs_match(b"a b", b"a  b"));
        assert!(!outputs_match(b" a", b"a"));
    }

    #[test]
    fn default_limits_follow_the_two_minute_rule() {
        assert_eq!(Limits::default().wall_timeout_s, DEFAULT_WALL_TIMEOUT_S);
        assert_eq!(DEFAULT_WALL_TIMEOUT_S, 120.0);
        assert_eq!(Limits::default().memory_bytes, None);
    }

    #[test]
    fn echo_program_passes_and_sums() {
        let dir = tempfile::tempdir().unwrap();
        let h = script_harness();
        let art = h.compile("echo", "#!/bin/sh\ncat\n", dir.path()).unwrap();
        let report = h.run_tests(&art, &echo_suite(3), &manifest("echo", &[1.0, 2.0, 4.0]));
        assert_eq!(report.verdicts, vec![Verdict::Pass; 3]);
        assert_eq!(report.total_runtime.unwrap().value(), 7.0);
        assert_eq!(judge(&report), Judgement::Correct);
    }

    #[test]
    fn wrong_answer_blocks_total() {
        let dir = tempfile::tempdir().unwrap();
        let h = script_harness();
        let src = "#!/bin/sh\nread x\nif [ \"$x\" = \"line 1\" ]; then echo bad; else echo \"$x\"; fi\n";
        let art = h.compile("wa", src, dir.path()).unwrap();
        let report = h.run_tests(&art, &echo_suite(3), &manifest("wa", &[1.0, 1.0, 1.0]));
        assert_eq!(
            report.verdicts,
            vec![Verdict::Pass, Verdict::WrongAnswer, Verdict::Pass]
        );
        assert!(report.measurements[0].is_some());
        assert!(report.measurements[1].is_none());
        assert!(report.total_runtime.is_none());
        assert_eq!(judge(&report), Judgement::Incorrect);
    }

    #[test]
    fn fail_fast_stops_early() {
        let dir = tempfile::tempdir().unwrap();
        let h = script_harness().with_fail_fast(true);
        let art = h.compile("bad", "#!/bin/sh\necho nope\n", dir.path()).unwrap();
        let report = h.run_tests(&art, &echo_suite(5), &manifest("bad", &[1.0; 5]));
        assert_eq!(report.verdicts, vec![Verdict::WrongAnswer]);
        assert_eq!(judge(&report), Judgement::Incorrect);
    }

    #[test]
    fn crash_is_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let h = script_harness();
        let art = h.compile("crash", "#!/bin/sh\ncat\nexit 4\n", dir.path()).unwrap();
        let report = h.run_tests(&art, &echo_suite(1), &manifest("crash", &[1.0]));
        assert_eq!(report.verdicts, vec![Verdict::RuntimeError]);
        assert!(report.diagnostics[0].as_deref().unwrap().contains("exit code 4"));
    }

    #[test]
    fn backend_failure_is_never_a_pass() {
        let dir = tempfile::tempdir().unwrap();
        let h = script_harness();
        let art = h.compile("nomanifest", "#!/bin/sh\ncat\n", dir.path()).unwrap();
        let report = h.run_tests(&art, &echo_suite(2), &ManifestBackend::default());
        assert_eq!(report.verdicts, vec![Verdict::RuntimeError; 2]);
        assert!(report.diagnostics[0].as_deref().unwrap().contains("MissingEntry"));
        assert_eq!(judge(&report), Judgement::Incorrect);
    }

    #[test]
    fn busy_loop_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let h = Harness::new(CompileConfig::script("main.sh"), Limits::default().with_wall_timeout(1.0));
        let art = h.compile("spin", "#!/bin/sh\nwhile :; do :; done\n", dir.path()).unwrap();
        let report = h.run_tests(&art, &echo_suite(1), &manifest("spin", &[1.0]));
        assert_eq!(report.verdicts, vec![Verdict::Timeout]);
    }

    #[test]
    fn compile_error_carries_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CompileConfig {
            compiler_command: "echo 'syntax error near line 1' >&2; exit 1".into(),
            ..CompileConfig::script("main.sh")
        };
        let h = Harness::new(cfg, Limits::default());
        let err = h.compile("x", "whatever", dir.path()).unwrap_err();
        assert!(matches!(err, CompileError::Failed { .. }));
        assert!(err.stderr().contains("syntax error"));
        let report = h.evaluate("x", "whatever", &echo_suite(1), &ManifestBackend::default(), dir.path());
        assert!(!report.compile_ok);
        assert_eq!(judge(&report), Judgement::Incorrect);
    }

    #[test]
    fn compile_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CompileConfig {
            compiler_command: "sleep 30".into(),
            timeout_s: 0.5,
            ..CompileConfig::script("main.sh")
        };
        let h = Harness::new(cfg, Limits::default());
        assert!(matches!(
            h.compile("slow", "", dir.path()),
            Err(CompileError::Timeout { .. })
        ));
    }

    #[test]
    fn parallel_matches_sequential() {
        let dir = tempfile::tempdir().unwrap();
        let backend = manifest("echo", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let seq = script_harness();
        let par = script_harness().with_workers(4);
        let art = seq.compile("echo", "#!/bin/sh\ncat\n", dir.path()).unwrap();
        let a = seq.run_tests(&art, &echo_suite(6), &backend);
        let b = par.run_tests(&art, &echo_suite(6), &backend);
        assert_eq!(a, b);
        assert_eq!(a.total_runtime.unwrap().value(), 21.0);
    }

    #[test]
    fn persisted_artifacts_land_per_test() {
        let dir = tempfile::tempdir().unwrap();
        let runs = dir.path().join("runs");
        let h = script_harness().with_persist_dir(&runs);
        let art = h.compile("echo", "#!/bin/sh\ncat\n", dir.path()).unwrap();
        h.run_tests(&art, &echo_suite(2), &manifest("echo", &[1.0, 2.0]));
        assert_eq!(fs::read(runs.join("echo/1/stdout")).unwrap(), b"line 1\n");
        assert!(runs.join("echo/0/measurement.json").exists());
    }

    #[test]
    fn suite_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p1");
        fs::create_dir_all(&p).unwrap();
        for k in 0..3 {
            fs::write(p.join(format!("input.{k}.txt")), format!("{k}")).unwrap();
            fs::write(p.join(format!("output.{k}.txt")), format!("{k}")).unwrap();
        }
        let suite = load_suite(dir.path(), "p1").unwrap();
        assert_eq!(suite.len(), 3);
        assert_eq!(suite[2].input, b"2");

        fs::write(p.join("input.4.txt"), "4").unwrap();
        assert!(matches!(load_suite(dir.path(), "p1"), Err(SuiteError::Gap { .. })));
        fs::remove_file(p.join("input.4.txt")).unwrap();
        fs::remove_file(p.join("output.1.txt")).unwrap();
        assert!(matches!(
            load_suite(dir.path(), "p1"),
            Err(SuiteError::MissingOutput { index: 1, .. })
        ));
        assert!(load_suite(dir.path(), "missing").is_err());
    }

    #[test]
    fn dir_names_are_safe_and_distinct() {
        assert_eq!(dir_name("s001"), "s001");
        assert_ne!(dir_name("a/b"), dir_name("a_b"));
        assert!(!dir_name("../x").contains('/'));
    }
}
