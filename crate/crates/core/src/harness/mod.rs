//! Campaign orchestration.
//!
//! A trial builds the prompt, asks the backend, extracts the test code, runs
//! it as generated (pre-repair) and after [`repair`] (post-repair), each in a
//! fresh copy of the fixture, and persists a [`TrialRecord`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::{encode_bundle, Backend, CompletionRequest, TrialKey, DEFAULT_SYSTEM_PREAMBLE};
use crate::gherkin::GherkinDocument;
use crate::postprocess::{
    classify_failure, extract_code, repair, FailureClass, GeneratedArtifact, ProjectManifest,
    RepairAction, SkippedNote, TestFile, TEST_FILE_PREFIX,
};
use crate::prompting::{
    pack_context, AcceptanceCriterion, PromptBuilder, PromptBundle, PromptError, PromptStyle,
};

pub mod runner;
pub mod sandbox;
pub mod store;

use runner::{execute_tests, CoverageReading, RunResult, RunnerAdapterConfig};
use store::{CampaignStore, StoreError};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("scenario `{id}`: {message}")]
    BadScenario { id: String, message: String },
    #[error("campaign needs n_trials >= 1 and parallelism >= 1")]
    BadCampaign,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("none of the {0} new trials reached the backend")]
    NoTrialStarted(usize),
}

/// A program under test plus what to ask about it.
#[derive(Debug, Clone)]
pub struct BenchmarkScenario {
    pub id: String,
    pub fixture_root: PathBuf,
    /// Import root of the project, relative to `fixture_root`.
    pub source_root: String,
    pub criteria: Vec<AcceptanceCriterion>,
    pub gherkin: Option<GherkinDocument>,
    pub runner: RunnerAdapterConfig,
    /// Relative path of the file whose line coverage is measured.
    pub coverage_target: String,
    /// Files offered to the model as context.
    pub include_globs: Vec<String>,
    pub known_external: BTreeMap<String, String>,
}

impl BenchmarkScenario {
    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |message: String| HarnessError::BadScenario {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(bad("id must be non-empty and use [A-Za-z0-9_-]".into()));
        }
        if !self.fixture_root.is_dir() {
            return Err(bad(format!("fixture root {} is not a directory", self.fixture_root.display())));
        }
        if !self.fixture_root.join(&self.coverage_target).is_file() {
            return Err(bad(format!("coverage target {} not found", self.coverage_target)));
        }
        self.runner
            .check()
            .map_err(|e| bad(format!("runner: {e}")))?;
        Ok(())
    }

    pub fn manifest(&self) -> Result<ProjectManifest, HarnessError> {
        ProjectManifest::discover(&self.fixture_root, &self.source_root, self.known_external.clone())
            .map_err(|source| HarnessError::Io {
                path: self.fixture_root.join(&self.source_root),
                source,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignSpec {
    pub scenario: String,
    pub style: PromptStyle,
    pub n_trials: u32,
    pub parallelism: usize,
    pub backend: BackendKind,
}

impl CampaignSpec {
    pub fn new(scenario: impl Into<String>, style: PromptStyle, backend: BackendKind) -> Self {
        CampaignSpec {
            scenario: scenario.into(),
            style,
            n_trials: 100,
            parallelism: 1,
            backend,
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.n_trials == 0 || self.parallelism == 0 {
            return Err(HarnessError::BadCampaign);
        }
        Ok(())
    }
}

/// One execution of a test file and its classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub run: RunResult,
    pub class: FailureClass,
    pub coverage: Option<CoverageReading>,
}

impl StageOutcome {
    fn from_run(run: RunResult, coverage: Option<CoverageReading>) -> Self {
        StageOutcome {
            class: classify_failure(&run),
            run,
            coverage,
        }
    }

    fn harness(message: &str) -> Self {
        StageOutcome::from_run(RunResult::harness_failure(message), None)
    }

    pub fn is_executable(&self) -> bool {
        self.run.executed >= 1
    }

    pub fn has_pass(&self) -> bool {
        self.run.executed >= 1 && self.run.passed >= 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub scenario: String,
    pub style: PromptStyle,
    pub trial_index: u32,
    /// sha256 of the encoded request messages.
    pub prompt_digest: String,
    pub raw_response: String,
    pub backend_error: Option<String>,
    pub retry_count: u32,
    pub artifact: Option<GeneratedArtifact>,
    /// Test file path relative to the sandbox root.
    pub test_path: String,
    pub pre_repair: StageOutcome,
    pub actions: Vec<RepairAction>,
    pub skipped: Vec<SkippedNote>,
    pub post_repair: StageOutcome,
    /// Post-repair coverage; present iff the post-repair run executed a test.
    pub coverage: Option<CoverageReading>,
    pub started_at: String,
    pub finished_at: String,
    pub duration_ms: u64,
}

impl TrialRecord {
    pub fn coverage_invariant_holds(&self) -> bool {
        self.coverage.is_some() == self.post_repair.is_executable()
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// `<work_dir>/generated/<scenario>__<style>`: the repaired test files.
pub fn generated_dir(work_dir: &Path, scenario: &str, style: PromptStyle) -> PathBuf {
    work_dir
        .join("generated")
        .join(format!("{scenario}__{}", style.short()))
}

/// Request parameters shared by every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestParams {
    pub model: String,
    pub temperature: f64,
    pub seed: Option<i64>,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub system_preamble: String,
}

impl Default for RequestParams {
    fn default() -> Self {
        let base = CompletionRequest::new("", Vec::new());
        RequestParams {
            model: "deepseek-coder-v2".into(),
            temperature: base.temperature,
            seed: None,
            max_tokens: base.max_tokens,
            timeout: base.timeout,
            system_preamble: DEFAULT_SYSTEM_PREAMBLE.into(),
        }
    }
}

/// Result of [`Harness::run_campaign`].
#[derive(Debug)]
pub struct CampaignOutcome {
    /// All records of the campaign, sorted by index.
    pub records: Vec<TrialRecord>,
    pub path: PathBuf,
    /// Indices run by this call; the rest came from an earlier run.
    pub ran: Vec<u32>,
}

pub struct Harness {
    pub backend: Arc<dyn Backend>,
    pub builder: PromptBuilder,
    pub params: RequestParams,
    pub work_dir: PathBuf,
    pub keep_failures: bool,
}

/// Per-campaign state shared by its trials.
pub struct TrialContext<'a> {
    pub scenario: &'a BenchmarkScenario,
    pub style: PromptStyle,
    pub request: CompletionRequest,
    pub prompt_digest: String,
    pub manifest: ProjectManifest,
}

impl Harness {
    pub fn new(backend: Arc<dyn Backend>, work_dir: impl Into<PathBuf>) -> Self {
        Harness {
            backend,
            builder: PromptBuilder::default(),
            params: RequestParams::default(),
            work_dir: work_dir.into(),
            keep_failures: false,
        }
    }

    pub fn build_prompt(
        &self,
        scenario: &BenchmarkScenario,
        style: PromptStyle,
    ) -> Result<PromptBundle, HarnessError> {
        let packed = pack_context(
            &scenario.fixture_root,
            &scenario.include_globs,
            self.builder.budget_chars,
        )?;
        Ok(match style {
            PromptStyle::NaturalLanguage => {
                self.builder.build_nl_prompt(&scenario.criteria, &packed.files)?
            }
            PromptStyle::GherkinStructured => {
                let doc = scenario.gherkin.as_ref().ok_or_else(|| HarnessError::BadScenario {
                    id: scenario.id.clone(),
                    message: "the gherkin style needs a feature file".into(),
                })?;
                self.builder.build_gs_prompt(doc, &packed.files)?
            }
        })
    }

    pub fn context<'a>(
        &self,
        scenario: &'a BenchmarkScenario,
        style: PromptStyle,
    ) -> Result<TrialContext<'a>, HarnessError> {
        scenario.check()?;
        let bundle = self.build_prompt(scenario, style)?;
        let messages = encode_bundle(&bundle, &self.params.system_preamble);
        let mut request = CompletionRequest::new(self.params.model.clone(), messages);
        request.temperature = self.params.temperature;
        request.seed = self.params.seed;
        request.max_tokens = self.params.max_tokens;
        request.timeout = self.params.timeout;
        let digest = Sha256::digest(
            serde_json::to_vec(&request.messages).expect("messages serialize"),
        );
        Ok(TrialContext {
            scenario,
            style,
            request,
            prompt_digest: hex::encode(digest),
            manifest: scenario.manifest()?,
        })
    }

    /// Run one trial and append its record to `store`.
    ///
    /// Backend and sandbox problems end up in the record with
    /// [`FailureClass::Harness`]; only a failing store write is an error.
    pub fn run_trial(
        &self,
        ctx: &TrialContext<'_>,
        trial_index: u32,
        store: &CampaignStore,
    ) -> Result<TrialRecord, HarnessError> {
        let record = self.execute_trial(ctx, trial_index);
        store.append(&record)?;
        Ok(record)
    }

    fn execute_trial(&self, ctx: &TrialContext<'_>, trial_index: u32) -> TrialRecord {
        let started = Instant::now();
        let started_at = Utc::now();
        let scenario = ctx.scenario;
        let test_path = format!("{TEST_FILE_PREFIX}_{}_{trial_index:03}.py", scenario.id);
        let key = TrialKey::new(scenario.id.clone(), ctx.style, trial_index);

        let mut record = TrialRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            scenario: scenario.id.clone(),
            style: ctx.style,
            trial_index,
            prompt_digest: ctx.prompt_digest.clone(),
            raw_response: String::new(),
            backend_error: None,
            retry_count: 0,
            artifact: None,
            test_path: test_path.clone(),
            pre_repair: StageOutcome::harness("not run"),
            actions: Vec::new(),
            skipped: Vec::new(),
            post_repair: StageOutcome::harness("not run"),
            coverage: None,
            started_at: timestamp(started_at),
            finished_at: String::new(),
            duration_ms: 0,
        };

        match self.backend.complete(&ctx.request, &key) {
            Err(e) => {
                let message = format!("backend: {e}");
                record.backend_error = Some(e.to_string());
                record.pre_repair = StageOutcome::harness(&message);
                record.post_repair = StageOutcome::harness(&message);
            }
            Ok(response) => {
                record.retry_count = response.retry_count;
                record.raw_response = response.content;
                let artifact = extract_code(&record.raw_response).ok();
                let code = artifact
                    .as_ref()
                    .map_or(String::new(), |a| a.chosen_code().to_string());
                record.artifact = artifact;
                let raw_file = TestFile::raw(test_path.clone(), code);
                let trial_dir =
                    sandbox::trial_dir(&self.work_dir, &scenario.id, ctx.style.short(), trial_index);

                record.pre_repair = self.run_stage(scenario, &raw_file, &trial_dir.join("pre"));
                let outcome = repair(&raw_file, &ctx.manifest);
                let generated = generated_dir(&self.work_dir, &scenario.id, ctx.style).join(&test_path);
                let _ = std::fs::create_dir_all(generated.parent().expect("has parent"))
                    .and_then(|()| std::fs::write(&generated, &outcome.file.source));
                record.actions = outcome.actions;
                record.skipped = outcome.skipped;
                record.post_repair = self.run_stage(scenario, &outcome.file, &trial_dir.join("post"));

                let failed = record.post_repair.class != FailureClass::None
                    || record.post_repair.run.failed > 0;
                if !(self.keep_failures && failed) {
                    let _ = std::fs::remove_dir_all(&trial_dir);
                }
            }
        }
        record.coverage = record.post_repair.coverage;
        record.finished_at = timestamp(Utc::now());
        record.duration_ms = started.elapsed().as_millis() as u64;
        record
    }

    fn run_stage(&self, scenario: &BenchmarkScenario, file: &TestFile, dir: &Path) -> StageOutcome {
        let prepared = sandbox::fresh_dir(dir)
            .and_then(|()| sandbox::copy_fixture(&scenario.fixture_root, dir));
        if let Err(e) = prepared {
            return StageOutcome::harness(&format!("sandbox copy failed: {e}"));
        }
        let (run, coverage) = execute_tests(file, dir, &scenario.runner, &scenario.coverage_target);
        StageOutcome::from_run(run, coverage)
    }

    /// Run the missing trials of a campaign on `spec.parallelism` workers.
    ///
    /// Records already present in the campaign file are kept and their
    /// indices skipped. The file ends up sorted by trial index.
    pub fn run_campaign(
        &self,
        scenario: &BenchmarkScenario,
        spec: &CampaignSpec,
        progress: &(dyn Fn(&TrialRecord) + Sync),
    ) -> Result<CampaignOutcome, HarnessError> {
        spec.check()?;
        let ctx = self.context(scenario, spec.style)?;
        let path = store::campaign_path(&self.work_dir, &scenario.id, spec.style);
        let store = CampaignStore::open(path.clone())?;
        let pending: Vec<u32> = (0..spec.n_trials)
            .filter(|i| !store.existing().contains_key(i))
            .collect();

        let next = AtomicUsize::new(0);
        let results: std::sync::Mutex<Vec<Result<TrialRecord, HarnessError>>> =
            std::sync::Mutex::new(Vec::with_capacity(pending.len()));
        std::thread::scope(|s| {
            for _ in 0..spec.parallelism.min(pending.len().max(1)) {
                s.spawn(|| loop {
                    let n = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&index) = pending.get(n) else { break };
                    let result = self.run_trial(&ctx, index, &store);
                    if let Ok(record) = &result {
                        progress(record);
                    }
                    results.lock().unwrap_or_else(|e| e.into_inner()).push(result);
                });
            }
        });
        let results = results.into_inner().unwrap_or_else(|e| e.into_inner());
        let mut started = 0;
        for result in results {
            if result?.backend_error.is_none() {
                started += 1;
            }
        }
        let records: Vec<TrialRecord> = store
            .finish()?
            .into_iter()
            .filter(|r| r.trial_index < spec.n_trials)
            .collect();
        if !pending.is_empty() && started == 0 {
            return Err(HarnessError::NoTrialStarted(pending.len()));
        }
        Ok(CampaignOutcome {
            records,
            path,
            ran: pending,
        })
    }
}
