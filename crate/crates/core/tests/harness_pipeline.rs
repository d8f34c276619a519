mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use acceptgen::gateway::stub::{StubReply, StubServer};
use acceptgen::gateway::{
    Backend, BackendConfig, CompletionRequest, CompletionResponse, GatewayError, HttpBackend,
    ScriptedBackend, TrialKey,
};
use acceptgen::harness::runner::execute_tests;
use acceptgen::harness::{BackendKind, CampaignSpec, Harness, TrialRecord};
use acceptgen::postprocess::{classify_failure, repair, FailureClass, TestFile};
use acceptgen::prompting::PromptStyle;

use common::*;

fn scripted(scenario: &str, style: PromptStyle, responses: &[&str]) -> ScriptedBackend {
    let mut backend = ScriptedBackend::new("");
    for (i, r) in responses.iter().enumerate() {
        backend.insert(TrialKey::new(scenario, style, i as u32), *r);
    }
    backend
}

fn strip_volatile(r: &TrialRecord) -> TrialRecord {
    let mut r = r.clone();
    r.started_at.clear();
    r.finished_at.clear();
    r.duration_ms = 0;
    r.pre_repair.run.duration_ms = 0;
    r.post_repair.run.duration_ms = 0;
    r
}

struct Counting<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B: Backend> Backend for Counting<B> {
    fn complete(
        &self,
        request: &CompletionRequest,
        key: &TrialKey,
    ) -> Result<CompletionResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request, key)
    }
}

#[test]
fn repair_turns_dependency_failure_into_pass() {
    let scenario = hello_world();
    let manifest = scenario.manifest().unwrap();
    let raw = TestFile::raw(
        "test_generated_hello_world_000.py",
        read_fixture("defects/dependency_missing_bootstrap.py"),
    );
    let dir = tempfile::tempdir().unwrap();

    let pre_dir = dir.path().join("pre");
    acceptgen::harness::sandbox::copy_fixture(&scenario.fixture_root, &pre_dir).unwrap();
    let (pre, _) = execute_tests(&raw, &pre_dir, &scenario.runner, &scenario.coverage_target);
    assert_eq!(classify_failure(&pre), FailureClass::Dependency, "{pre:?}");

    let fixed = repair(&raw, &manifest);
    let post_dir = dir.path().join("post");
    acceptgen::harness::sandbox::copy_fixture(&scenario.fixture_root, &post_dir).unwrap();
    let (post, cov) = execute_tests(&fixed.file, &post_dir, &scenario.runner, &scenario.coverage_target);
    assert_eq!(classify_failure(&post), FailureClass::None, "{post:?}");
    assert_eq!((post.collected, post.passed), (1, 1));
    assert_eq!(cov.unwrap().percent, 75.0);
    assert!(repair(&fixed.file, &manifest).actions.is_empty());
}

#[test]
fn scripted_trials_follow_the_examples() {
    let scenario = hello_world();
    let work = tempfile::tempdir().unwrap();
    let gs_sample = read_fixture("corpora/responses/hello_gs_example2.md");
    let prose = "You could check the output of the program by hand.";
    let nl_sample = read_fixture("corpora/responses/hello_nl_example2.md");
    let backend = scripted("hello_world", PromptStyle::GherkinStructured, &[&gs_sample, prose, &nl_sample]);
    let harness = Harness::new(Arc::new(backend), work.path());
    let mut spec = CampaignSpec::new("hello_world", PromptStyle::GherkinStructured, BackendKind::Scripted);
    spec.n_trials = 3;
    let out = harness.run_campaign(&scenario, &spec, &|_| {}).unwrap();
    let r = &out.records;
    assert_eq!(r.len(), 3);
    assert!(r.iter().all(TrialRecord::coverage_invariant_holds));

    assert_eq!((r[0].post_repair.run.collected, r[0].post_repair.run.passed), (1, 1));
    assert!(r[0].coverage.is_some());
    assert_eq!(r[0].pre_repair.class, FailureClass::Dependency);

    assert_eq!(r[1].post_repair.run.collected, 0);
    assert!(matches!(r[1].post_repair.class, FailureClass::Dependency | FailureClass::Semantic));
    assert!(r[1].coverage.is_none());

    assert!(r[2].post_repair.run.executed >= 1 && r[2].post_repair.run.failed >= 1);
    assert_eq!(r[2].post_repair.class, FailureClass::Semantic);

    let generated = acceptgen::harness::generated_dir(work.path(), "hello_world", PromptStyle::GherkinStructured);
    assert!(generated.join(&r[0].test_path).is_file());
    // passing trials leave no sandbox behind
    assert!(!work.path().join("sandboxes/hello_world__gs/trial-0000").exists());
}

#[test]
fn campaign_resumes_and_is_deterministic() {
    let scenario = hello_world();
    let work = tempfile::tempdir().unwrap();
    let gs_sample = read_fixture("corpora/responses/hello_gs_example2.md");
    let make = || Counting {
        inner: scripted("hello_world", PromptStyle::GherkinStructured, &[gs_sample.as_str(); 5]),
        calls: AtomicUsize::new(0),
    };
    let mut spec = CampaignSpec::new("hello_world", PromptStyle::GherkinStructured, BackendKind::Scripted);
    spec.n_trials = 2;
    let first = Arc::new(make());
    Harness::new(first.clone(), work.path()).run_campaign(&scenario, &spec, &|_| {}).unwrap();
    assert_eq!(first.calls.load(Ordering::SeqCst), 2);

    spec.n_trials = 5;
    spec.parallelism = 2;
    let second = Arc::new(make());
    let out = Harness::new(second.clone(), work.path()).run_campaign(&scenario, &spec, &|_| {}).unwrap();
    assert_eq!(second.calls.load(Ordering::SeqCst), 3);
    assert_eq!(out.ran, [2, 3, 4]);
    let indices: Vec<_> = out.records.iter().map(|r| r.trial_index).collect();
    assert_eq!(indices, [0, 1, 2, 3, 4]);
    let lines = std::fs::read_to_string(&out.path).unwrap();
    assert_eq!(lines.lines().count(), 5);
    let a = strip_volatile(&out.records[0]);
    let b = strip_volatile(&out.records[4]);
    assert_eq!(a.post_repair, b.post_repair);
    assert_eq!(a.actions, b.actions);
}

#[test]
fn campaign_file_is_locked_while_running() {
    let work = tempfile::tempdir().unwrap();
    let path = acceptgen::harness::store::campaign_path(work.path(), "hello_world", PromptStyle::NaturalLanguage);
    let held = acceptgen::harness::store::CampaignStore::open(path.clone()).unwrap();
    assert!(matches!(
        acceptgen::harness::store::CampaignStore::open(path.clone()),
        Err(acceptgen::harness::store::StoreError::Locked(_))
    ));
    drop(held);
    assert!(acceptgen::harness::store::CampaignStore::open(path).is_ok());
}

#[test]
fn backend_failures_are_recorded_not_fatal() {
    let scenario = hello_world();
    let work = tempfile::tempdir().unwrap();
    let server = StubServer::start(vec![StubReply::status(400)]).unwrap();
    let backend = HttpBackend::new(BackendConfig::new(server.url())).unwrap();
    let harness = Harness::new(Arc::new(backend), work.path());
    let mut spec = CampaignSpec::new("hello_world", PromptStyle::NaturalLanguage, BackendKind::Live);
    spec.n_trials = 2;
    let err = harness.run_campaign(&scenario, &spec, &|_| {}).unwrap_err();
    assert!(matches!(err, acceptgen::harness::HarnessError::NoTrialStarted(2)));
    let records = acceptgen::harness::store::read_records(
        &acceptgen::harness::store::campaign_path(work.path(), "hello_world", PromptStyle::NaturalLanguage),
    )
    .unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.post_repair.class == FailureClass::Harness));
}

#[test]
fn parallel_campaign_beats_serial_with_latency() {
    let scenario = hello_world();
    let prose = "No code here, only an explanation of what to test.";
    let run = |parallelism: usize| {
        let server = StubServer::start(vec![StubReply::ok(prose).with_delay(Duration::from_millis(300))]).unwrap();
        let mut config = BackendConfig::new(server.url());
        config.max_inflight = 4;
        config.requests_per_minute = 1000;
        let backend = HttpBackend::new(config).unwrap();
        let work = tempfile::tempdir().unwrap();
        let harness = Harness::new(Arc::new(backend), work.path());
        let mut spec = CampaignSpec::new("hello_world", PromptStyle::NaturalLanguage, BackendKind::Live);
        spec.n_trials = 4;
        spec.parallelism = parallelism;
        let started = Instant::now();
        let out = harness.run_campaign(&scenario, &spec, &|_| {}).unwrap();
        (started.elapsed(), out.records.iter().map(strip_volatile).collect::<Vec<_>>())
    };
    let (serial, a) = run(1);
    let (parallel, b) = run(4);
    assert!(parallel < serial, "parallel {parallel:?} vs serial {serial:?}");
    assert_eq!(a, b);
}

#[test]
fn misspelled_identifier_stays_semantic() {
    let scenario = digits();
    let manifest = scenario.manifest().unwrap();
    let raw = TestFile::raw(
        "test_generated_digits_000.py",
        read_fixture("defects/misspelled_identifier.py"),
    );
    let dir = tempfile::tempdir().unwrap();
    let post_dir = dir.path().join("post");
    acceptgen::harness::sandbox::copy_fixture(&scenario.fixture_root, &post_dir).unwrap();
    let fixed = repair(&raw, &manifest);
    let (post, _) = execute_tests(&fixed.file, &post_dir, &scenario.runner, &scenario.coverage_target);
    assert_eq!(classify_failure(&post), FailureClass::Semantic, "{post:?}\n{}", fixed.file.source);
    assert!(post
        .runtime_errors
        .iter()
        .any(|e| e.exception == "NameError" && e.message.contains("predinted_labels")));
}
