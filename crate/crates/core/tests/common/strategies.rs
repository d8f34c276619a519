//! Generators and brute-force oracles shared by the property suites.

use proptest::prelude::*;

use acceptgen::gherkin::{Feature, GherkinDocument, Scenario, Step, StepKeyword};
use acceptgen::harness::runner::{CoverageReading, ErrorSignature, RunResult};
use acceptgen::harness::{StageOutcome, TrialRecord, RECORD_SCHEMA_VERSION};
use acceptgen::postprocess::classify_failure;
use acceptgen::prompting::PromptStyle;

fn word() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9\"'(),.:éü-]{1,9}"
}

fn phrase(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec((word(), prop::bool::weighted(0.1)), 1..=max_words).prop_map(|words| {
        let mut out = String::new();
        for (i, (w, wide)) in words.into_iter().enumerate() {
            if i > 0 {
                out.push_str(if wide { "  " } else { " " });
            }
            out.push_str(&w);
        }
        out
    })
}

/// A line that cannot be mistaken for a keyword line.
fn description_line() -> impl Strategy<Value = String> {
    ("[a-z]", phrase(6)).prop_map(|(head, rest)| format!("{head}{rest}"))
}

fn step(first: bool) -> impl Strategy<Value = Step> {
    let keyword = if first {
        prop::sample::select(vec![StepKeyword::Given, StepKeyword::When, StepKeyword::Then])
    } else {
        prop::sample::select(StepKeyword::ALL.to_vec())
    };
    (keyword, phrase(8)).prop_map(|(k, text)| Step::new(k, text))
}

fn scenario_steps() -> impl Strategy<Value = Vec<Step>> {
    (step(true), prop::collection::vec(step(false), 0..6)).prop_map(|(head, mut tail)| {
        tail.insert(0, head);
        tail
    })
}

/// Documents inside the supported grammar: unique scenario names, no
/// leading conjunctions, trimmed single-line texts.
pub fn gherkin_document() -> impl Strategy<Value = GherkinDocument> {
    (
        prop::option::of(phrase(5)),
        prop::collection::vec(description_line(), 0..3),
        prop::collection::vec((phrase(5), scenario_steps()), 1..7),
    )
        .prop_map(|(name, description, scenarios)| {
            let scenarios = scenarios
                .into_iter()
                .enumerate()
                .map(|(i, (name, steps))| Scenario {
                    name: format!("{name} {i}"),
                    steps,
                })
                .collect();
            GherkinDocument::synthesized(Feature {
                name: name.unwrap_or_default(),
                description: description.join("\n"),
                scenarios,
            })
        })
}

fn run_result() -> impl Strategy<Value = RunResult> {
    (0u32..4, 0u32..4, 0u8..6).prop_map(|(passed, failed, flavour)| {
        let mut run = RunResult {
            collected: passed + failed,
            executed: passed + failed,
            passed,
            failed,
            ..RunResult::default()
        };
        if failed > 0 {
            run.runtime_errors
                .push(ErrorSignature::new("AssertionError", "assert 1 == 2"));
        }
        match flavour {
            0 if run.executed == 0 => {
                run.collection_error =
                    Some(ErrorSignature::new("ModuleNotFoundError", "No module named 'main'"))
            }
            1 if run.executed == 0 => {
                run.collection_error = Some(ErrorSignature::new("SyntaxError", "invalid syntax"))
            }
            2 if run.executed == 0 => run.timed_out = true,
            3 if failed > 0 => run
                .runtime_errors
                .push(ErrorSignature::new("NameError", "name 'x' is not defined")),
            _ => {}
        }
        run
    })
}

fn stage_outcome() -> impl Strategy<Value = StageOutcome> {
    (run_result(), 1u32..400, 0.0f64..=1.0).prop_map(|(run, total, frac)| {
        let coverage = (run.executed >= 1)
            .then(|| CoverageReading::new(total, (frac * f64::from(total)).floor() as u32))
            .flatten();
        StageOutcome {
            class: classify_failure(&run),
            run,
            coverage,
        }
    })
}

pub fn record_from(index: u32, pre: StageOutcome, post: StageOutcome) -> TrialRecord {
    TrialRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        scenario: "synthetic".into(),
        style: PromptStyle::NaturalLanguage,
        trial_index: index,
        prompt_digest: String::new(),
        raw_response: String::new(),
        backend_error: None,
        retry_count: 0,
        artifact: None,
        test_path: format!("test_generated_synthetic_{index:03}.py"),
        pre_repair: pre,
        actions: Vec::new(),
        skipped: Vec::new(),
        coverage: post.coverage,
        post_repair: post,
        started_at: String::new(),
        finished_at: String::new(),
        duration_ms: 0,
    }
}

pub fn campaign(max_len: usize) -> impl Strategy<Value = Vec<TrialRecord>> {
    prop::collection::vec((stage_outcome(), stage_outcome()), 1..=max_len).prop_map(|stages| {
        stages
            .into_iter()
            .enumerate()
            .map(|(i, (pre, post))| record_from(i as u32, pre, post))
            .collect()
    })
}

/// Brute-force recount of one stage: executable %, pass rate % over all
/// files, coverage mean and sample std.
#[derive(Debug)]
pub struct Recount {
    pub executable_pct: f64,
    pub pass_rate_pct: f64,
    pub coverage_mean: Option<f64>,
    pub coverage_std: Option<f64>,
    pub n_files: usize,
}

pub fn recount(records: &[TrialRecord], post: bool) -> Recount {
    let outcome = |r: &TrialRecord| if post { r.post_repair.clone() } else { r.pre_repair.clone() };
    let mut executable = 0u64;
    let mut passing = 0u64;
    let mut hits: Vec<(u32, u32)> = Vec::new();
    for r in records {
        let o = outcome(r);
        if o.run.passed + o.run.failed > 0 {
            executable += 1;
            if o.run.passed > 0 {
                passing += 1;
            }
            if let Some(c) = o.coverage {
                hits.push((c.lines_hit, c.lines_total));
            }
        }
    }
    let n = records.len() as f64;
    let values: Vec<f64> = hits
        .iter()
        .map(|&(h, t)| f64::from(h) * 100.0 / f64::from(t))
        .collect();
    let (mean, std) = if values.is_empty() {
        (None, None)
    } else {
        let k = values.len() as f64;
        let mut mean = 0.0;
        for v in &values {
            mean += v / k;
        }
        let mut ss = 0.0;
        for v in &values {
            ss += (v - mean) * (v - mean);
        }
        let std = if values.len() > 1 { (ss / (k - 1.0)).sqrt() } else { 0.0 };
        (Some(mean), Some(std))
    };
    Recount {
        executable_pct: executable as f64 * 100.0 / n,
        pass_rate_pct: passing as f64 * 100.0 / n,
        coverage_mean: mean,
        coverage_std: std,
        n_files: records.len(),
    }
}

pub fn close(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale < 1e-12 || (a - b).abs() <= 1e-9 * scale
}
