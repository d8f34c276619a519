//! Campaign metrics and report rendering.
//!
//! Three numbers describe a campaign:
//!
//! * **Executable (%)**: files where at least one test ran to a verdict;
//! * **Pass Rate (%)**: files where at least one executed test passed;
//! * **Coverage (%)**: line coverage of the program under test, mean and
//!   standard deviation over executable files only.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::harness::{StageOutcome, TrialRecord};
use crate::postprocess::FailureClass;
use crate::prompting::PromptStyle;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no records to summarize")]
    EmptyRecords,
    #[error("records mix campaigns: {0} and {1}")]
    MixedCampaign(String, String),
    #[error("summaries are not comparable: {0}")]
    ScenarioMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvalStage {
    PreRepair,
    PostRepair,
}

impl EvalStage {
    pub const ALL: [EvalStage; 2] = [EvalStage::PreRepair, EvalStage::PostRepair];

    pub fn label(self) -> &'static str {
        match self {
            EvalStage::PreRepair => "pre-repair",
            EvalStage::PostRepair => "post-repair",
        }
    }

    pub fn outcome(self, record: &TrialRecord) -> &StageOutcome {
        match self {
            EvalStage::PreRepair => &record.pre_repair,
            EvalStage::PostRepair => &record.post_repair,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PassRateDenominator {
    #[default]
    AllFiles,
    ExecutableFiles,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdConvention {
    /// Divide by n − 1.
    #[default]
    Sample,
    /// Divide by n.
    Population,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryOptions {
    pub pass_rate_denominator: PassRateDenominator,
    pub std: StdConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub scenario: String,
    pub style: PromptStyle,
    pub stage: EvalStage,
    pub n_files: usize,
    pub executable_files: usize,
    pub passing_files: usize,
    pub executable_pct: f64,
    pub pass_rate_pct: f64,
    /// `None` when no executable file carries a coverage reading.
    pub coverage_mean: Option<f64>,
    pub coverage_std: Option<f64>,
    pub coverage_n: usize,
    pub failure_breakdown: BTreeMap<FailureClass, usize>,
}

fn mean_std(values: &[f64], convention: StdConvention) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let divisor = match convention {
        StdConvention::Sample => n - 1.0,
        StdConvention::Population => n,
    };
    // a single value has no spread under either convention
    let std = if divisor > 0.0 { (ss / divisor).sqrt() } else { 0.0 };
    Some((mean, std))
}

/// Compute the campaign metrics of `records` at `stage`.
pub fn summarize(
    records: &[TrialRecord],
    stage: EvalStage,
    opts: SummaryOptions,
) -> Result<CampaignSummary, MetricsError> {
    let first = records.first().ok_or(MetricsError::EmptyRecords)?;
    if let Some(other) = records
        .iter()
        .find(|r| r.scenario != first.scenario || r.style != first.style)
    {
        return Err(MetricsError::MixedCampaign(
            format!("{}/{}", first.scenario, first.style),
            format!("{}/{}", other.scenario, other.style),
        ));
    }
    let mut executable_files = 0;
    let mut passing_files = 0;
    let mut coverage = Vec::new();
    let mut failure_breakdown: BTreeMap<FailureClass, usize> =
        FailureClass::ALL.iter().map(|c| (*c, 0)).collect();
    for record in records {
        let outcome = stage.outcome(record);
        *failure_breakdown.entry(outcome.class).or_default() += 1;
        if outcome.is_executable() {
            executable_files += 1;
            if outcome.has_pass() {
                passing_files += 1;
            }
            if let Some(c) = outcome.coverage {
                coverage.push(c.percent);
            }
        }
    }
    let n_files = records.len();
    let pct = |k: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    let pass_denominator = match opts.pass_rate_denominator {
        PassRateDenominator::AllFiles => n_files,
        PassRateDenominator::ExecutableFiles => executable_files,
    };
    let stats = mean_std(&coverage, opts.std);
    Ok(CampaignSummary {
        scenario: first.scenario.clone(),
        style: first.style,
        stage,
        n_files,
        executable_files,
        passing_files,
        executable_pct: pct(executable_files, n_files),
        pass_rate_pct: pct(passing_files, pass_denominator),
        coverage_mean: stats.map(|s| s.0),
        coverage_std: stats.map(|s| s.1),
        coverage_n: coverage.len(),
        failure_breakdown,
    })
}

/// Two decimals, halves rounded away from zero.
pub fn format_2dp(x: f64) -> String {
    let scaled = x * 100.0;
    // absorb representation error such as 1.005 * 100 = 100.49999999999999
    let nudged = scaled + scaled.signum() * 1e-9 * scaled.abs().max(1.0);
    let rounded = nudged.round();
    if rounded == 0.0 {
        return "0.00".into();
    }
    let sign = if rounded < 0.0 { "-" } else { "" };
    let units = rounded.abs() as u64;
    format!("{sign}{}.{:02}", units / 100, units % 100)
}

fn signed_2dp(x: f64) -> String {
    let s = format_2dp(x);
    if s == "0.00" || s.starts_with('-') {
        s
    } else {
        format!("+{s}")
    }
}

pub const UNDEFINED_CELL: &str = "—";

pub fn coverage_cell(s: &CampaignSummary) -> String {
    match (s.coverage_mean, s.coverage_std) {
        (Some(m), Some(sd)) => format!("{} ± {}", format_2dp(m), format_2dp(sd)),
        _ => UNDEFINED_CELL.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

fn column_headers(summaries: &[CampaignSummary]) -> Vec<String> {
    let mixed_scenarios = summaries.iter().any(|s| s.scenario != summaries[0].scenario);
    let mixed_stages = summaries.iter().any(|s| s.stage != summaries[0].stage);
    summaries
        .iter()
        .map(|s| {
            let mut h = if mixed_scenarios {
                format!("{} ({})", s.scenario, s.style.label())
            } else {
                s.style.label().to_string()
            };
            if mixed_stages {
                let _ = write!(h, " [{}]", s.stage.label());
            }
            h
        })
        .collect()
}

fn report_rows(summaries: &[CampaignSummary]) -> Vec<(String, Vec<String>)> {
    let row = |name: &str, f: &dyn Fn(&CampaignSummary) -> String| {
        (name.to_string(), summaries.iter().map(f).collect::<Vec<_>>())
    };
    let mut rows = vec![
        row("Executable (%)", &|s| format_2dp(s.executable_pct)),
        row("Pass Rate (%)", &|s| format_2dp(s.pass_rate_pct)),
        row("Coverage (%)", &coverage_cell),
        row("Files", &|s| s.n_files.to_string()),
    ];
    for class in FailureClass::ALL {
        let name = match class {
            FailureClass::None => "No failure",
            FailureClass::Dependency => "Dependency failures",
            FailureClass::Semantic => "Semantic failures",
            FailureClass::Harness => "Harness failures",
        };
        rows.push(row(name, &|s| {
            s.failure_breakdown.get(&class).copied().unwrap_or(0).to_string()
        }));
    }
    rows
}

/// Number of leading rows forming the metrics table; the rest is the
/// failure breakdown.
const METRIC_ROWS: usize = 3;

fn markdown_table(out: &mut String, headers: &[String], rows: &[(String, Vec<String>)]) {
    let _ = writeln!(out, "| Metric | {} |", headers.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(headers.len()));
    for (name, cells) in rows {
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
}

/// Render summaries as a table with one column per summary.
///
/// Markdown output has the three metric rows first, then a separate table
/// with file counts and the failure breakdown. CSV output carries the same
/// rows in one table.
pub fn render_report(summaries: &[CampaignSummary], format: ReportFormat) -> String {
    if summaries.is_empty() {
        return String::new();
    }
    let headers = column_headers(summaries);
    let rows = report_rows(summaries);
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            markdown_table(&mut out, &headers, &rows[..METRIC_ROWS]);
            out.push('\n');
            markdown_table(&mut out, &headers, &rows[METRIC_ROWS..]);
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["Metric".to_string()];
            header.extend(headers);
            w.write_record(&header).expect("in-memory write");
            for (name, cells) in rows {
                let mut record = vec![name];
                record.extend(cells);
                w.write_record(&record).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Larger {
    A,
    B,
    Tie,
}

/// Signed differences `b − a` between two summaries of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDelta {
    pub scenario: String,
    pub stage: EvalStage,
    pub a: PromptStyle,
    pub b: PromptStyle,
    pub executable_delta: f64,
    pub pass_rate_delta: f64,
    pub coverage_mean_delta: Option<f64>,
    pub larger_executable: Larger,
}

pub fn diff_summaries(a: &CampaignSummary, b: &CampaignSummary) -> Result<SummaryDelta, MetricsError> {
    if a.scenario != b.scenario {
        return Err(MetricsError::ScenarioMismatch(format!(
            "scenario {} vs {}",
            a.scenario, b.scenario
        )));
    }
    if a.stage != b.stage {
        return Err(MetricsError::ScenarioMismatch(format!(
            "stage {} vs {}",
            a.stage.label(),
            b.stage.label()
        )));
    }
    let larger_executable = match a.executable_pct.total_cmp(&b.executable_pct) {
        std::cmp::Ordering::Equal => Larger::Tie,
        std::cmp::Ordering::Greater => Larger::A,
        std::cmp::Ordering::Less => Larger::B,
    };
    Ok(SummaryDelta {
        scenario: a.scenario.clone(),
        stage: a.stage,
        a: a.style,
        b: b.style,
        executable_delta: b.executable_pct - a.executable_pct,
        pass_rate_delta: b.pass_rate_pct - a.pass_rate_pct,
        coverage_mean_delta: a.coverage_mean.zip(b.coverage_mean).map(|(x, y)| y - x),
        larger_executable,
    })
}

impl SummaryDelta {
    pub fn executable_cell(&self) -> String {
        signed_2dp(self.executable_delta)
    }

    pub fn pass_rate_cell(&self) -> String {
        signed_2dp(self.pass_rate_delta)
    }

    pub fn coverage_cell(&self) -> String {
        self.coverage_mean_delta
            .map_or_else(|| UNDEFINED_CELL.to_string(), signed_2dp)
    }

    pub fn render_markdown(&self) -> String {
        let larger = match self.larger_executable {
            Larger::A => self.a.label(),
            Larger::B => self.b.label(),
            Larger::Tie => "tie",
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| Metric | {} − {} ({}, {}) |",
            self.b.label(),
            self.a.label(),
            self.scenario,
            self.stage.label()
        );
        let _ = writeln!(out, "|---|---|");
        let _ = writeln!(out, "| Executable (%) | {} |", self.executable_cell());
        let _ = writeln!(out, "| Pass Rate (%) | {} |", self.pass_rate_cell());
        let _ = writeln!(out, "| Coverage mean (%) | {} |", self.coverage_cell());
        let _ = writeln!(out, "\nHigher executable rate: {larger}");
        out
    }
}
