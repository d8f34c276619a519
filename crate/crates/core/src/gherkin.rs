//! The Gherkin intermediate representation.
//!
//! Only the subset used to structure prompts is understood: a single
//! `Feature` with an optional free-text description, followed by one or more
//! `Scenario` blocks made of `Given`/`When`/`Then`/`And`/`But` steps. Lines
//! starting with `#` are comments. Everything else (tags, `Background`,
//! `Scenario Outline`, `Examples`, tables, doc strings) is rejected with
//! [`ParseErrorKind::UnknownKeywordLine`] rather than being misread.
//!
//! ```
//! use acceptgen::gherkin::{parse_gherkin, render_gherkin, StepKeyword};
//!
//! let doc = parse_gherkin("Feature: Greeting\n  Scenario: Run\n    When I run main\n    Then I see hello world\n").unwrap();
//! let scenario = &doc.feature.scenarios[0];
//! assert_eq!(scenario.steps[1].keyword, StepKeyword::Then);
//! assert_eq!(parse_gherkin(&render_gherkin(&doc)).unwrap(), doc);
//! ```

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Threshold above which a feature is flagged as carrying too many scenarios.
pub const MAX_SCENARIOS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKeyword {
    Given,
    When,
    Then,
    And,
    But,
}

impl StepKeyword {
    pub const ALL: [StepKeyword; 5] = [
        StepKeyword::Given,
        StepKeyword::When,
        StepKeyword::Then,
        StepKeyword::And,
        StepKeyword::But,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepKeyword::Given => "Given",
            StepKeyword::When => "When",
            StepKeyword::Then => "Then",
            StepKeyword::And => "And",
            StepKeyword::But => "But",
        }
    }

    /// `And` and `But` continue the previous step instead of opening a phase.
    pub fn is_conjunction(self) -> bool {
        matches!(self, StepKeyword::And | StepKeyword::But)
    }

    fn phase(self) -> Option<u8> {
        match self {
            StepKeyword::Given => Some(0),
            StepKeyword::When => Some(1),
            StepKeyword::Then => Some(2),
            StepKeyword::And | StepKeyword::But => None,
        }
    }
}

impl fmt::Display for StepKeyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One step line. Equality ignores the source line number.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct Step {
    pub keyword: StepKeyword,
    pub text: String,
    /// 1-based line in the parsed source; 0 for synthesized steps.
    pub line: usize,
}

impl Step {
    pub fn new(keyword: StepKeyword, text: impl Into<String>) -> Self {
        Step {
            keyword,
            text: text.into(),
            line: 0,
        }
    }
}

impl PartialEq for Step {
    fn eq(&self, other: &Self) -> bool {
        self.keyword == other.keyword && self.text == other.text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub steps: Vec<Step>,
}

impl Scenario {
    /// Keywords with every `And`/`But` replaced by the nearest preceding
    /// primary keyword. A leading conjunction resolves to itself.
    pub fn resolved_keywords(&self) -> Vec<StepKeyword> {
        let mut current = None;
        self.steps
            .iter()
            .map(|step| {
                if step.keyword.is_conjunction() {
                    current.unwrap_or(step.keyword)
                } else {
                    current = Some(step.keyword);
                    step.keyword
                }
            })
            .collect()
    }

    /// Line of the first step that moves backwards through Given → When → Then.
    fn ordering_violation(&self) -> Option<&Step> {
        let mut highest = 0u8;
        for (step, keyword) in self.steps.iter().zip(self.resolved_keywords()) {
            if let Some(phase) = keyword.phase() {
                if phase < highest {
                    return Some(step);
                }
                highest = phase;
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    /// Description lines joined with `\n`, each trimmed.
    pub description: String,
    pub scenarios: Vec<Scenario>,
}

/// A parsed or synthesized Gherkin document.
///
/// Equality is structural: it ignores `source_text` and step line numbers.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct GherkinDocument {
    pub feature: Feature,
    pub source_text: Option<String>,
}

impl PartialEq for GherkinDocument {
    fn eq(&self, other: &Self) -> bool {
        self.feature == other.feature
    }
}

impl GherkinDocument {
    pub fn synthesized(feature: Feature) -> Self {
        GherkinDocument {
            feature,
            source_text: None,
        }
    }

    /// The source line a step was parsed from, trimmed, when the document
    /// still carries its source text.
    pub fn source_line(&self, step: &Step) -> Option<&str> {
        let source = self.source_text.as_deref()?;
        if step.line == 0 {
            return None;
        }
        source
            .split('\n')
            .nth(step.line - 1)
            .map(|l| l.trim_end_matches('\r').trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseErrorKind {
    EmptyInput,
    MissingFeature,
    NoScenarios,
    ScenarioWithoutSteps,
    LeadingAndBut,
    DuplicateScenario,
    UnknownKeywordLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// 1-based; 0 when the error concerns the whole input.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {:?}: {}", self.line, self.kind, self.message)
    }
}

/// Every error found in one parse attempt, in source order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} Gherkin parse error(s), first: {}", .0.len(), .0[0])]
pub struct ParseErrors(pub Vec<ParseError>);

impl ParseErrors {
    pub fn kinds(&self) -> Vec<ParseErrorKind> {
        self.0.iter().map(|e| e.kind).collect()
    }
}

enum Line<'a> {
    Feature(&'a str),
    Scenario(&'a str),
    Step(StepKeyword, &'a str),
    Unsupported(&'a str),
    Text(&'a str),
}

const UNSUPPORTED_PREFIXES: [&str; 9] = [
    "Background:",
    "Scenario Outline:",
    "Scenario Template:",
    "Examples:",
    "Scenarios:",
    "Example:",
    "Rule:",
    "@",
    "|",
];

fn classify(trimmed: &str) -> Line<'_> {
    if let Some(rest) = trimmed.strip_prefix("Feature:") {
        return Line::Feature(rest.trim());
    }
    for prefix in UNSUPPORTED_PREFIXES {
        if trimmed.starts_with(prefix) {
            return Line::Unsupported(prefix);
        }
    }
    if trimmed.starts_with("\"\"\"") || trimmed.starts_with("```") {
        return Line::Unsupported("doc string");
    }
    if let Some(rest) = trimmed.strip_prefix("Scenario:") {
        return Line::Scenario(rest.trim());
    }
    for keyword in StepKeyword::ALL {
        if let Some(rest) = trimmed.strip_prefix(keyword.as_str()) {
            if rest.starts_with(char::is_whitespace) && !rest.trim().is_empty() {
                return Line::Step(keyword, rest.trim());
            }
            if rest.is_empty() {
                return Line::Unsupported("step without text");
            }
        }
    }
    Line::Text(trimmed)
}

/// Parse a `.feature` text into a [`GherkinDocument`].
///
/// All errors in the input are reported, not just the first.
pub fn parse_gherkin(text: &str) -> Result<GherkinDocument, ParseErrors> {
    if text.trim().is_empty() {
        return Err(ParseErrors(vec![ParseError {
            kind: ParseErrorKind::EmptyInput,
            line: 0,
            message: "input is empty".into(),
        }]));
    }

    let mut errors = Vec::new();
    let mut feature: Option<(Feature, usize)> = None;
    let mut description: Vec<&str> = Vec::new();
    let mut scenarios: Vec<(Scenario, usize)> = Vec::new();
    let mut error = |kind, line, message: String| {
        errors.push(ParseError {
            kind,
            line,
            message,
        })
    };

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim_end_matches('\r').trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match classify(trimmed) {
            Line::Feature(name) => {
                if feature.is_some() {
                    error(
                        ParseErrorKind::UnknownKeywordLine,
                        line_no,
                        "only one Feature per document is supported".into(),
                    );
                } else {
                    feature = Some((
                        Feature {
                            name: name.to_string(),
                            description: String::new(),
                            scenarios: Vec::new(),
                        },
                        line_no,
                    ));
                }
            }
            _ if feature.is_none() => {
                error(
                    ParseErrorKind::MissingFeature,
                    line_no,
                    format!("expected `Feature:` before `{trimmed}`"),
                );
                // One MissingFeature is enough; the rest of the text is noise.
                break;
            }
            Line::Scenario(name) => scenarios.push((
                Scenario {
                    name: name.to_string(),
                    steps: Vec::new(),
                },
                line_no,
            )),
            Line::Step(keyword, step_text) => match scenarios.last_mut() {
                None => error(
                    ParseErrorKind::UnknownKeywordLine,
                    line_no,
                    format!("step `{keyword}` outside of a Scenario"),
                ),
                Some((scenario, _)) => {
                    if scenario.steps.is_empty() && keyword.is_conjunction() {
                        error(
                            ParseErrorKind::LeadingAndBut,
                            line_no,
                            format!(
                                "scenario `{}` opens with `{keyword}`",
                                scenario.name
                            ),
                        );
                    }
                    scenario.steps.push(Step {
                        keyword,
                        text: step_text.to_string(),
                        line: line_no,
                    });
                }
            },
            Line::Unsupported(what) => error(
                ParseErrorKind::UnknownKeywordLine,
                line_no,
                format!("unsupported Gherkin construct `{what}`"),
            ),
            Line::Text(t) => {
                if scenarios.is_empty() {
                    description.push(t);
                } else {
                    error(
                        ParseErrorKind::UnknownKeywordLine,
                        line_no,
                        format!("unrecognised line `{t}`"),
                    );
                }
            }
        }
    }

    let Some((mut feature, feature_line)) = feature else {
        if errors.is_empty() {
            errors.push(ParseError {
                kind: ParseErrorKind::MissingFeature,
                line: 0,
                message: "no `Feature:` line".into(),
            });
        }
        return Err(ParseErrors(errors));
    };

    if scenarios.is_empty() {
        errors.push(ParseError {
            kind: ParseErrorKind::NoScenarios,
            line: feature_line,
            message: format!("feature `{}` has no scenarios", feature.name),
        });
    }
    let mut seen = HashSet::new();
    for (scenario, line) in &scenarios {
        if scenario.steps.is_empty() {
            errors.push(ParseError {
                kind: ParseErrorKind::ScenarioWithoutSteps,
                line: *line,
                message: format!("scenario `{}` has no steps", scenario.name),
            });
        }
        if !seen.insert(scenario.name.as_str()) {
            errors.push(ParseError {
                kind: ParseErrorKind::DuplicateScenario,
                line: *line,
                message: format!("scenario name `{}` is used twice", scenario.name),
            });
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(ParseErrors(errors));
    }

    feature.description = description.join("\n");
    feature.scenarios = scenarios.into_iter().map(|(s, _)| s).collect();
    Ok(GherkinDocument {
        feature,
        source_text: Some(text.to_string()),
    })
}

/// Canonical rendering: two-space indentation per level, LF endings, one
/// blank line between scenarios.
pub fn render_gherkin(doc: &GherkinDocument) -> String {
    let feature = &doc.feature;
    let mut out = String::new();
    out.push_str("Feature:");
    if !feature.name.is_empty() {
        out.push(' ');
        out.push_str(&feature.name);
    }
    out.push('\n');
    let has_description = !feature.description.is_empty();
    for line in feature.description.lines() {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
    for (i, scenario) in feature.scenarios.iter().enumerate() {
        if i > 0 || has_description {
            out.push('\n');
        }
        out.push_str("  Scenario:");
        if !scenario.name.is_empty() {
            out.push(' ');
            out.push_str(&scenario.name);
        }
        out.push('\n');
        for step in &scenario.steps {
            out.push_str("    ");
            out.push_str(step.keyword.as_str());
            out.push(' ');
            out.push_str(&step.text);
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub line: usize,
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{severity}[{}] line {}: {}", self.code, self.line, self.message)
    }
}

pub mod codes {
    pub const TOO_MANY_SCENARIOS: &str = "TOO_MANY_SCENARIOS";
    pub const THEN_BEFORE_WHEN: &str = "THEN_BEFORE_WHEN";
    pub const NO_SCENARIOS: &str = "NO_SCENARIOS";
    pub const EMPTY_SCENARIO: &str = "EMPTY_SCENARIO";
    pub const LEADING_AND_BUT: &str = "LEADING_AND_BUT";
    pub const DUPLICATE_SCENARIO: &str = "DUPLICATE_SCENARIO";
    pub const BAD_STEP_TEXT: &str = "BAD_STEP_TEXT";
}

/// Lint a document. Parsed documents can only produce warnings; the error
/// checks exist for documents assembled in code.
pub fn validate(doc: &GherkinDocument) -> Vec<LintFinding> {
    let feature = &doc.feature;
    let mut findings = Vec::new();

    if feature.scenarios.is_empty() {
        findings.push(LintFinding {
            severity: Severity::Error,
            code: codes::NO_SCENARIOS,
            message: format!("feature `{}` has no scenarios", feature.name),
            line: 0,
        });
    }
    if feature.scenarios.len() > MAX_SCENARIOS {
        findings.push(LintFinding {
            severity: Severity::Warning,
            code: codes::TOO_MANY_SCENARIOS,
            message: format!(
                "feature has {} scenarios; more than {MAX_SCENARIOS} tends to hurt generalization",
                feature.scenarios.len()
            ),
            line: feature
                .scenarios
                .get(MAX_SCENARIOS)
                .and_then(|s| s.steps.first())
                .map_or(0, |s| s.line.saturating_sub(1)),
        });
    }

    let mut names = HashSet::new();
    for scenario in &feature.scenarios {
        let first_line = scenario.steps.first().map_or(0, |s| s.line);
        if !names.insert(scenario.name.as_str()) {
            findings.push(LintFinding {
                severity: Severity::Error,
                code: codes::DUPLICATE_SCENARIO,
                message: format!("scenario name `{}` is used twice", scenario.name),
                line: first_line,
            });
        }
        let Some(first) = scenario.steps.first() else {
            findings.push(LintFinding {
                severity: Severity::Error,
                code: codes::EMPTY_SCENARIO,
                message: format!("scenario `{}` has no steps", scenario.name),
                line: 0,
            });
            continue;
        };
        if first.keyword.is_conjunction() {
            findings.push(LintFinding {
                severity: Severity::Error,
                code: codes::LEADING_AND_BUT,
                message: format!("scenario `{}` opens with `{}`", scenario.name, first.keyword),
                line: first.line,
            });
        }
        for step in &scenario.steps {
            let text = &step.text;
            if text.is_empty() || text.trim() != text || text.contains('\n') {
                findings.push(LintFinding {
                    severity: Severity::Error,
                    code: codes::BAD_STEP_TEXT,
                    message: format!("step text {text:?} is not a single trimmed line"),
                    line: step.line,
                });
            }
        }
        if let Some(step) = scenario.ordering_violation() {
            findings.push(LintFinding {
                severity: Severity::Warning,
                code: codes::THEN_BEFORE_WHEN,
                message: format!(
                    "scenario `{}`: `{} {}` breaks Given → When → Then order",
                    scenario.name, step.keyword, step.text
                ),
                line: step.line,
            });
        }
    }
    findings
}

/// True when `validate` reports no error-severity finding.
pub fn is_valid(findings: &[LintFinding]) -> bool {
    findings.iter().all(|f| f.severity != Severity::Error)
}
