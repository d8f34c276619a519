#![allow(dead_code)]

pub mod strategies;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use acceptgen::gherkin::parse_gherkin;
use acceptgen::harness::runner::RunnerAdapterConfig;
use acceptgen::harness::BenchmarkScenario;
use acceptgen::postprocess::default_known_external;
use acceptgen::prompting::AcceptanceCriterion;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn pytest_adapter() -> RunnerAdapterConfig {
    let script = fixtures().join("adapters/pytest_adapter.py");
    let mut cfg = RunnerAdapterConfig::new(
        [
            "python3",
            script.to_str().unwrap(),
            "--workdir",
            "{workdir}",
            "--testfile",
            "{testfile}",
            "--resultfile",
            "{resultfile}",
            "--covfile",
            "{covfile}",
            "--covtarget",
            "{covtarget}",
        ]
        .map(String::from)
        .to_vec(),
    )
    .unwrap();
    cfg.timeout = Duration::from_secs(60);
    cfg.env = BTreeMap::from([
        ("PYTEST_DISABLE_PLUGIN_AUTOLOAD".into(), "1".into()),
        ("PYTHONDONTWRITEBYTECODE".into(), "1".into()),
    ]);
    cfg
}

pub fn hello_world() -> BenchmarkScenario {
    BenchmarkScenario {
        id: "hello_world".into(),
        fixture_root: fixtures().join("hello_world"),
        source_root: "src".into(),
        criteria: vec![AcceptanceCriterion::new("ac-1", "should return hello world").unwrap()],
        gherkin: Some(parse_gherkin(&read_fixture("features/hello_world.feature")).unwrap()),
        runner: pytest_adapter(),
        coverage_target: "src/hello_world/main.py".into(),
        include_globs: vec!["src/**/*.py".into()],
        known_external: default_known_external(),
    }
}

pub fn digits() -> BenchmarkScenario {
    BenchmarkScenario {
        id: "digits".into(),
        fixture_root: fixtures().join("digits"),
        source_root: "src".into(),
        criteria: vec![AcceptanceCriterion::new(
            "ac-1",
            "the classification accuracy of the model is 95 percent",
        )
        .unwrap()],
        gherkin: Some(parse_gherkin(&read_fixture("features/digits.feature")).unwrap()),
        runner: pytest_adapter(),
        coverage_target: "src/digit_recognition/classify_digits.py".into(),
        include_globs: vec!["src/**/*.py".into()],
        known_external: default_known_external(),
    }
}
