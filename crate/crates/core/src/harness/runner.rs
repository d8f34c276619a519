//! Runner adapter protocol.
//!
//! A runner adapter is any command that executes one test file inside a
//! sandbox and writes two JSON files:
//!
//! * the result file, `{"schema": "acceptgen-result/1", "collected": n,
//!   "collection_error": null | {"exception", "message"}, "tests": [{"id",
//!   "outcome": "passed"|"failed"|"error"|"skipped", "error": null |
//!   {"exception", "message"}}]}`
//! * the coverage file, `{"schema": "acceptgen-coverage/1", "path",
//!   "executable": [line, ...], "hit": [line, ...]}` with 1-based lines of
//!   the coverage target.
//!
//! The command is an argv template; `{workdir}`, `{testfile}`,
//! `{resultfile}`, `{covfile}` and `{covtarget}` are substituted per run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::postprocess::TestFile;

pub const RESULT_SCHEMA: &str = "acceptgen-result/1";
pub const COVERAGE_SCHEMA: &str = "acceptgen-coverage/1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Directory inside each sandbox holding adapter output and logs.
pub const OUTPUT_DIR: &str = ".acceptgen";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerAdapterConfig {
    pub command_template: Vec<String>,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RunnerConfigError {
    #[error("command template is empty")]
    Empty,
    #[error("command template lacks the `{0}` placeholder")]
    MissingPlaceholder(&'static str),
}

impl RunnerAdapterConfig {
    pub fn new(command_template: Vec<String>) -> Result<Self, RunnerConfigError> {
        let cfg = RunnerAdapterConfig {
            command_template,
            timeout: DEFAULT_TIMEOUT,
            env: BTreeMap::new(),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), RunnerConfigError> {
        if self.command_template.is_empty() {
            return Err(RunnerConfigError::Empty);
        }
        for placeholder in ["{testfile}", "{resultfile}"] {
            if !self.command_template.iter().any(|a| a.contains(placeholder)) {
                return Err(RunnerConfigError::MissingPlaceholder(placeholder));
            }
        }
        Ok(())
    }

    fn argv(&self, values: &[(&str, &str)]) -> Vec<String> {
        self.command_template
            .iter()
            .map(|arg| {
                values
                    .iter()
                    .fold(arg.clone(), |acc, (key, value)| acc.replace(key, value))
            })
            .collect()
    }
}

/// Exception class plus first message line, with sandbox paths removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSignature {
    pub exception: String,
    #[serde(default)]
    pub message: String,
}

impl ErrorSignature {
    pub fn new(exception: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorSignature {
            exception: exception.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub collected: u32,
    /// Tests that ran to a verdict (passed or failed).
    pub executed: u32,
    pub passed: u32,
    pub failed: u32,
    pub collection_error: Option<ErrorSignature>,
    pub runtime_errors: Vec<ErrorSignature>,
    pub duration_ms: u64,
    pub timed_out: bool,
    /// Set when the adapter could not be run or broke its protocol.
    pub harness_error: Option<String>,
}

impl RunResult {
    pub fn harness_failure(message: impl Into<String>) -> Self {
        RunResult {
            harness_error: Some(message.into()),
            ..RunResult::default()
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.passed + self.failed <= self.executed
            && (self.collection_error.is_some() || self.executed <= self.collected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReading {
    pub lines_total: u32,
    pub lines_hit: u32,
    pub percent: f64,
}

impl CoverageReading {
    pub fn new(lines_total: u32, lines_hit: u32) -> Option<Self> {
        (lines_total > 0 && lines_hit <= lines_total).then(|| CoverageReading {
            lines_total,
            lines_hit,
            percent: 100.0 * f64::from(lines_hit) / f64::from(lines_total),
        })
    }
}

#[derive(Debug, Deserialize)]
struct ResultFile {
    schema: String,
    collected: u32,
    #[serde(default)]
    collection_error: Option<ErrorSignature>,
    #[serde(default)]
    tests: Vec<TestVerdict>,
}

#[derive(Debug, Deserialize)]
struct TestVerdict {
    #[allow(dead_code)]
    id: String,
    outcome: Outcome,
    #[serde(default)]
    error: Option<ErrorSignature>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Outcome {
    Passed,
    Failed,
    Error,
    Skipped,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CoverageFile {
    pub schema: String,
    pub path: String,
    pub executable: Vec<u32>,
    pub hit: Vec<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("result file {0} is missing")]
    MissingResult(PathBuf),
    #[error("result file is malformed: {0}")]
    MalformedResult(String),
    #[error("coverage file is missing or malformed: {0}")]
    Coverage(String),
}

/// Turn a result file into a [`RunResult`] (duration and timeout unset).
pub fn parse_result_file(text: &str) -> Result<RunResult, ProtocolError> {
    let file: ResultFile =
        serde_json::from_str(text).map_err(|e| ProtocolError::MalformedResult(e.to_string()))?;
    if file.schema != RESULT_SCHEMA {
        return Err(ProtocolError::MalformedResult(format!(
            "unexpected schema `{}`",
            file.schema
        )));
    }
    let mut run = RunResult {
        collected: file.collected,
        collection_error: file.collection_error,
        ..RunResult::default()
    };
    for test in file.tests {
        match test.outcome {
            Outcome::Passed => {
                run.executed += 1;
                run.passed += 1;
            }
            Outcome::Failed => {
                run.executed += 1;
                run.failed += 1;
            }
            Outcome::Error | Outcome::Skipped => {}
        }
        if matches!(test.outcome, Outcome::Failed | Outcome::Error) {
            run.runtime_errors.push(
                test.error
                    .unwrap_or_else(|| ErrorSignature::new("UnknownError", "")),
            );
        }
    }
    if run.collection_error.is_none() && run.executed > run.collected {
        return Err(ProtocolError::MalformedResult(format!(
            "{} verdicts for {} collected tests",
            run.executed, run.collected
        )));
    }
    Ok(run)
}

/// Turn a coverage file into a reading for `target`.
pub fn parse_coverage_file(text: &str, target: &str) -> Result<CoverageReading, ProtocolError> {
    let file: CoverageFile =
        serde_json::from_str(text).map_err(|e| ProtocolError::Coverage(e.to_string()))?;
    if file.schema != COVERAGE_SCHEMA {
        return Err(ProtocolError::Coverage(format!(
            "unexpected schema `{}`",
            file.schema
        )));
    }
    if normalize_rel(&file.path) != normalize_rel(target) {
        return Err(ProtocolError::Coverage(format!(
            "covers `{}`, expected `{target}`",
            file.path
        )));
    }
    let executable: BTreeSet<u32> = file.executable.into_iter().collect();
    let hit = file.hit.iter().filter(|l| executable.contains(l)).collect::<BTreeSet<_>>();
    CoverageReading::new(executable.len() as u32, hit.len() as u32)
        .ok_or_else(|| ProtocolError::Coverage("no executable lines".into()))
}

fn normalize_rel(p: &str) -> String {
    p.trim_start_matches("./").replace('\\', "/")
}

/// Write `file` into `sandbox` and run the adapter on it.
///
/// Never fails: spawn problems and protocol violations come back as a
/// [`RunResult`] with `harness_error` set. Coverage is only read when at
/// least one test ran to a verdict.
pub fn execute_tests(
    file: &TestFile,
    sandbox: &Path,
    cfg: &RunnerAdapterConfig,
    coverage_target: &str,
) -> (RunResult, Option<CoverageReading>) {
    let started = Instant::now();
    let (mut run, coverage) = run_adapter(file, sandbox, cfg, coverage_target);
    run.duration_ms = started.elapsed().as_millis() as u64;
    (run, coverage)
}

fn run_adapter(
    file: &TestFile,
    sandbox: &Path,
    cfg: &RunnerAdapterConfig,
    coverage_target: &str,
) -> (RunResult, Option<CoverageReading>) {
    let out_dir = sandbox.join(OUTPUT_DIR);
    let test_path = sandbox.join(&file.virtual_path);
    let prepared = std::fs::create_dir_all(&out_dir)
        .and_then(|_| match test_path.parent() {
            Some(parent) => std::fs::create_dir_all(parent),
            None => Ok(()),
        })
        .and_then(|_| std::fs::write(&test_path, &file.source));
    if let Err(e) = prepared {
        return (RunResult::harness_failure(format!("cannot write test file: {e}")), None);
    }

    let result_path = out_dir.join("result.json");
    let cov_path = out_dir.join("coverage.json");
    let sandbox_str = sandbox.to_string_lossy();
    let argv = cfg.argv(&[
        ("{workdir}", &sandbox_str),
        ("{testfile}", &test_path.to_string_lossy()),
        ("{resultfile}", &result_path.to_string_lossy()),
        ("{covfile}", &cov_path.to_string_lossy()),
        ("{covtarget}", coverage_target),
    ]);

    let log = match File::create(out_dir.join("runner.log")) {
        Ok(f) => f,
        Err(e) => return (RunResult::harness_failure(format!("cannot open log: {e}")), None),
    };
    let log_err = match log.try_clone() {
        Ok(f) => f,
        Err(e) => return (RunResult::harness_failure(format!("cannot open log: {e}")), None),
    };
    let mut command = Command::new(&argv[0]);
    command
        .args(&argv[1..])
        .current_dir(sandbox)
        .envs(&cfg.env)
        .stdin(Stdio::null())
        .stdout(log)
        .stderr(log_err);
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        command.process_group(0);
    }

    let mut child = match command.spawn() {
        Ok(c) => c,
        Err(e) => {
            return (
                RunResult::harness_failure(format!("cannot start `{}`: {e}", argv[0])),
                None,
            )
        }
    };

    let deadline = Instant::now() + cfg.timeout;
    let mut poll = Duration::from_millis(2);
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if Instant::now() >= deadline => {
                kill_tree(&mut child);
                return (
                    RunResult {
                        timed_out: true,
                        ..RunResult::default()
                    },
                    None,
                );
            }
            Ok(None) => {
                std::thread::sleep(poll);
                poll = (poll * 2).min(Duration::from_millis(25));
            }
            Err(e) => {
                kill_tree(&mut child);
                return (RunResult::harness_failure(format!("wait failed: {e}")), None);
            }
        }
    }

    let run = match std::fs::read_to_string(&result_path) {
        Ok(text) => match parse_result_file(&text) {
            Ok(run) => run,
            Err(e) => return (RunResult::harness_failure(e.to_string()), None),
        },
        Err(_) => {
            return (
                RunResult::harness_failure(ProtocolError::MissingResult(result_path).to_string()),
                None,
            )
        }
    };
    if run.executed == 0 {
        return (run, None);
    }
    let coverage = std::fs::read_to_string(&cov_path)
        .map_err(|e| ProtocolError::Coverage(e.to_string()))
        .and_then(|text| parse_coverage_file(&text, coverage_target));
    match coverage {
        Ok(reading) => (run, Some(reading)),
        Err(e) => (RunResult::harness_failure(e.to_string()), None),
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // The child leads its own process group; take the whole group down.
        let pgid = child.id() as libc::pid_t;
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postprocess::Stage;

    #[test]
    fn result_pass_through() {
        let run = parse_result_file(
            r#"{"schema":"acceptgen-result/1","collected":1,"collection_error":null,
                "tests":[{"id":"t::a","outcome":"passed","error":null}]}"#,
        )
        .unwrap();
        assert_eq!((run.collected, run.executed, run.passed, run.failed), (1, 1, 1, 0));
        assert!(run.is_consistent());
    }

    #[test]
    fn result_counts_verdicts_only() {
        let run = parse_result_file(
            r#"{"schema":"acceptgen-result/1","collected":4,
                "tests":[
                  {"id":"a","outcome":"failed","error":{"exception":"NameError","message":"name 'capsys' is not defined"}},
                  {"id":"b","outcome":"error","error":{"exception":"ModuleNotFoundError","message":"x"}},
                  {"id":"c","outcome":"skipped"},
                  {"id":"d","outcome":"passed"}]}"#,
        )
        .unwrap();
        assert_eq!((run.executed, run.passed, run.failed), (2, 1, 1));
        let names: Vec<_> = run.runtime_errors.iter().map(|e| e.exception.as_str()).collect();
        assert_eq!(names, ["NameError", "ModuleNotFoundError"]);
    }

    #[test]
    fn result_protocol_errors() {
        assert!(parse_result_file("{").is_err());
        assert!(parse_result_file(r#"{"schema":"other","collected":0}"#).is_err());
        assert!(parse_result_file(
            r#"{"schema":"acceptgen-result/1","collected":0,"tests":[{"id":"a","outcome":"passed"}]}"#
        )
        .is_err());
    }

    #[test]
    fn coverage_three_of_four() {
        let reading = parse_coverage_file(
            r#"{"schema":"acceptgen-coverage/1","path":"src/hello_world/main.py",
                "executable":[1,2,4,5],"hit":[1,2,4]}"#,
            "src/hello_world/main.py",
        )
        .unwrap();
        assert_eq!((reading.lines_total, reading.lines_hit), (4, 3));
        assert_eq!(reading.percent, 75.0);
    }

    #[test]
    fn coverage_ignores_non_executable_hits_and_checks_path() {
        let text = r#"{"schema":"acceptgen-coverage/1","path":"./a.py","executable":[1,2],"hit":[2,3,3]}"#;
        assert_eq!(parse_coverage_file(text, "a.py").unwrap().lines_hit, 1);
        assert!(parse_coverage_file(text, "b.py").is_err());
        assert!(CoverageReading::new(0, 0).is_none());
        assert!(CoverageReading::new(2, 3).is_none());
    }

    #[test]
    fn template_needs_placeholders() {
        assert_eq!(
            RunnerAdapterConfig::new(vec!["run".into(), "{testfile}".into()]),
            Err(RunnerConfigError::MissingPlaceholder("{resultfile}"))
        );
        assert_eq!(RunnerAdapterConfig::new(vec![]), Err(RunnerConfigError::Empty));
    }

    fn shell_adapter(script: &str, timeout: Duration) -> RunnerAdapterConfig {
        let mut cfg = RunnerAdapterConfig::new(vec![
            "sh".into(),
            "-c".into(),
            script.into(),
            "adapter".into(),
            "{testfile}".into(),
            "{resultfile}".into(),
            "{covfile}".into(),
        ])
        .unwrap();
        cfg.timeout = timeout;
        cfg
    }

    fn test_file() -> TestFile {
        TestFile {
            virtual_path: "test_generated_x.py".into(),
            source: "def test_x():\n    assert True\n".into(),
            stage: Stage::Raw,
        }
    }

    #[cfg(unix)]
    #[test]
    fn runs_adapter_and_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let script = r#"test -f "$1" || exit 9
printf '{"schema":"acceptgen-result/1","collected":1,"tests":[{"id":"x","outcome":"passed"}]}' > "$2"
printf '{"schema":"acceptgen-coverage/1","path":"m.py","executable":[1,2,4,5],"hit":[1,2,4]}' > "$3""#;
        let (run, cov) = execute_tests(
            &test_file(),
            dir.path(),
            &shell_adapter(script, Duration::from_secs(10)),
            "m.py",
        );
        assert_eq!(run.harness_error, None);
        assert_eq!((run.collected, run.executed, run.passed, run.failed), (1, 1, 1, 0));
        assert_eq!(cov.unwrap().percent, 75.0);
    }

    #[cfg(unix)]
    #[test]
    fn timeout_kills_the_process_group() {
        let dir = tempfile::tempdir().unwrap();
        let marker = dir.path().join("survivor");
        let script = format!("(sleep 2; touch {}) & sleep 30", marker.display());
        let started = Instant::now();
        let (run, cov) = execute_tests(
            &test_file(),
            dir.path(),
            &shell_adapter(&script, Duration::from_millis(300)),
            "m.py",
        );
        assert!(run.timed_out);
        assert!(cov.is_none());
        assert!(started.elapsed() < Duration::from_secs(5));
        std::thread::sleep(Duration::from_millis(2500));
        assert!(!marker.exists(), "background child outlived the timeout");
    }

    #[test]
    fn missing_interpreter_is_a_harness_failure() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunnerAdapterConfig::new(vec![
            "/nonexistent/python".into(),
            "{testfile}".into(),
            "{resultfile}".into(),
        ])
        .unwrap();
        let (run, _) = execute_tests(&test_file(), dir.path(), &cfg, "m.py");
        assert!(run.harness_error.unwrap().contains("cannot start"));
    }

    #[cfg(unix)]
    #[test]
    fn missing_result_file_is_a_protocol_error() {
        let dir = tempfile::tempdir().unwrap();
        let (run, _) = execute_tests(
            &test_file(),
            dir.path(),
            &shell_adapter("exit 0", Duration::from_secs(5)),
            "m.py",
        );
        assert!(run.harness_error.unwrap().contains("missing"));
    }
}
