//! Acceptance criteria, prompt templates and context packing.
//!
//! Three prompt shapes are built here: a plain natural-language request, a
//! Gherkin-structured request, and a request asking the model to write the
//! Gherkin itself. Context files travel with the instruction, each preceded
//! by a `// file: <path>` banner.

use std::fmt;
use std::path::{Component, Path};

use globset::{Glob, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::gherkin::{render_gherkin, GherkinDocument};

pub const DEFAULT_BUDGET_CHARS: usize = 24_000;

pub const DEFAULT_NL_TEMPLATE: &str =
    "Write pytest tests for the following acceptance criteria: {criteria}";

pub const DEFAULT_GS_TEMPLATE: &str = "Given the files, generate me a pytest for the acceptance criteria:

{gherkin}

Use good coding python conventions, and make sure to import any packages / fixture that you use. Do not refer to any non-existent resources. When importing files, take the project structure into account.";

pub const DEFAULT_GHERKIN_GEN_TEMPLATE: &str = "Given the Gherkin reference, generate me Gherkin syntax-compliant instructions for the following acceptance criteria:
{criteria_bullets}
Write them in an explicit way to be easily testable";

/// Virtual path under which the Gherkin rendering is attached to context.
pub const FEATURE_CONTEXT_PATH: &str = "acceptance_criteria.feature";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("no acceptance criteria given")]
    EmptyCriteria,
    #[error("acceptance criterion `{0}` has empty text")]
    BlankCriterion(String),
    #[error("a Gherkin reference document is required")]
    MissingReference,
    #[error("prompt needs {needed} chars but the budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("invalid context path `{0}`: must be relative without `..`")]
    BadPath(String),
    #[error("template is missing the `{0}` placeholder")]
    MissingPlaceholder(&'static str),
    #[error("invalid include pattern: {0}")]
    Glob(#[from] globset::Error),
    #[error("none of the {0} matched context files could be read")]
    NothingReadable(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceCriterion {
    pub id: String,
    pub text: String,
}

impl AcceptanceCriterion {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, PromptError> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PromptError::BlankCriterion(id));
        }
        Ok(AcceptanceCriterion {
            id,
            text: text.trim().to_string(),
        })
    }

    /// One criterion per non-blank line; `#` lines are comments and a
    /// leading `- ` or `* ` bullet is dropped. Ids are `ac-1`, `ac-2`, ...
    pub fn parse_list(text: &str) -> Vec<AcceptanceCriterion> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")).unwrap_or(l).trim())
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| AcceptanceCriterion {
                id: format!("ac-{}", i + 1),
                text: l.to_string(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptStyle {
    #[serde(rename = "nl")]
    NaturalLanguage,
    #[serde(rename = "gs")]
    GherkinStructured,
}

impl PromptStyle {
    pub fn short(self) -> &'static str {
        match self {
            PromptStyle::NaturalLanguage => "nl",
            PromptStyle::GherkinStructured => "gs",
        }
    }

    /// Column heading used in reports.
    pub fn label(self) -> &'static str {
        match self {
            PromptStyle::NaturalLanguage => "NL",
            PromptStyle::GherkinStructured => "Gherkin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nl" | "natural-language" => Some(PromptStyle::NaturalLanguage),
            "gs" | "gherkin" | "gherkin-structured" => Some(PromptStyle::GherkinStructured),
            _ => None,
        }
    }
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// What a bundle asks the model for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptKind {
    #[serde(rename = "nl")]
    NaturalLanguage,
    #[serde(rename = "gs")]
    GherkinStructured,
    #[serde(rename = "gherkin-gen")]
    GherkinGeneration,
}

impl From<PromptStyle> for PromptKind {
    fn from(style: PromptStyle) -> Self {
        match style {
            PromptStyle::NaturalLanguage => PromptKind::NaturalLanguage,
            PromptStyle::GherkinStructured => PromptKind::GherkinStructured,
        }
    }
}

impl PromptKind {
    pub fn short(self) -> &'static str {
        match self {
            PromptKind::NaturalLanguage => "nl",
            PromptKind::GherkinStructured => "gs",
            PromptKind::GherkinGeneration => "gherkin-gen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextKind {
    Code,
    GherkinFeature,
    ReferenceDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextFile {
    virtual_path: String,
    pub content: String,
    pub kind: ContextKind,
}

impl ContextFile {
    pub fn new(
        virtual_path: impl Into<String>,
        content: impl Into<String>,
        kind: ContextKind,
    ) -> Result<Self, PromptError> {
        let virtual_path = virtual_path.into();
        let path = Path::new(&virtual_path);
        let escapes = virtual_path.is_empty()
            || path.is_absolute()
            || path
                .components()
                .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
        if escapes {
            return Err(PromptError::BadPath(virtual_path));
        }
        Ok(ContextFile {
            virtual_path: virtual_path.replace('\\', "/"),
            content: content.into(),
            kind,
        })
    }

    pub fn virtual_path(&self) -> &str {
        &self.virtual_path
    }

    pub fn banner(&self) -> String {
        format!("// file: {}", self.virtual_path)
    }

    /// The exact text this file contributes to a user message.
    pub fn serialized(&self) -> String {
        format!("\n\n{}\n{}", self.banner(), self.content)
    }

    pub fn serialized_len(&self) -> usize {
        // "\n\n" + banner + "\n" + content
        3 + self.banner().chars().count() + self.content.chars().count()
    }
}

/// Where the Gherkin text of a structured prompt was placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeaturePlacement {
    None,
    InstructionAndContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: String,
    pub context: Vec<ContextFile>,
    pub kind: PromptKind,
    pub budget_chars: usize,
    /// Context files left out to respect the budget, in drop order.
    pub dropped: Vec<String>,
    pub feature_placement: FeaturePlacement,
}

impl PromptBundle {
    /// Instruction followed by every context file with its banner.
    pub fn user_message(&self) -> String {
        let mut out = self.instruction.clone();
        for file in &self.context {
            out.push_str(&file.serialized());
        }
        out
    }

    pub fn serialized_len(&self) -> usize {
        self.instruction.chars().count()
            + self
                .context
                .iter()
                .map(ContextFile::serialized_len)
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptTemplates {
    /// `{criteria}`: the text of a single criterion, or a bullet list.
    pub nl: String,
    /// `{gherkin}`: the scenario steps.
    pub gs: String,
    /// `{criteria_bullets}`: one `- ` bullet per criterion.
    pub gherkin_gen: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            nl: DEFAULT_NL_TEMPLATE.into(),
            gs: DEFAULT_GS_TEMPLATE.into(),
            gherkin_gen: DEFAULT_GHERKIN_GEN_TEMPLATE.into(),
        }
    }
}

impl PromptTemplates {
    pub fn check(&self) -> Result<(), PromptError> {
        for (template, placeholder) in [
            (&self.nl, "{criteria}"),
            (&self.gs, "{gherkin}"),
            (&self.gherkin_gen, "{criteria_bullets}"),
        ] {
            if !template.contains(placeholder) {
                return Err(PromptError::MissingPlaceholder(placeholder));
            }
        }
        Ok(())
    }
}

fn bullets(criteria: &[AcceptanceCriterion]) -> String {
    criteria
        .iter()
        .map(|c| format!("- {}", c.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn fill(template: &str, placeholder: &str, value: &str) -> String {
    template
        .replace(placeholder, value)
        .split('\n')
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_criteria(criteria: &[AcceptanceCriterion]) -> Result<(), PromptError> {
    if criteria.is_empty() {
        return Err(PromptError::EmptyCriteria);
    }
    if let Some(c) = criteria.iter().find(|c| c.text.trim().is_empty()) {
        return Err(PromptError::BlankCriterion(c.id.clone()));
    }
    Ok(())
}

/// The scenario text quoted inside a structured prompt.
///
/// Steps are quoted as they appear in the source when the document was
/// parsed, so hand-written spacing survives; synthesized documents use the
/// canonical `Keyword text` form. Scenario headings are only emitted when
/// the feature has more than one scenario.
pub fn gherkin_prompt_body(doc: &GherkinDocument) -> String {
    let scenarios = &doc.feature.scenarios;
    let mut blocks = Vec::with_capacity(scenarios.len());
    for scenario in scenarios {
        let mut lines = Vec::new();
        if scenarios.len() > 1 {
            lines.push(format!("Scenario: {}", scenario.name));
        }
        for step in &scenario.steps {
            lines.push(match doc.source_line(step) {
                Some(line) => line.to_string(),
                None => format!("{} {}", step.keyword, step.text),
            });
        }
        blocks.push(lines.join("\n"));
    }
    blocks.join("\n\n")
}

/// Builds the three prompt kinds against a fixed template set and budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBuilder {
    pub templates: PromptTemplates,
    pub budget_chars: usize,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        PromptBuilder {
            templates: PromptTemplates::default(),
            budget_chars: DEFAULT_BUDGET_CHARS,
        }
    }
}

impl PromptBuilder {
    pub fn new(templates: PromptTemplates, budget_chars: usize) -> Result<Self, PromptError> {
        templates.check()?;
        Ok(PromptBuilder {
            templates,
            budget_chars: budget_chars.max(1),
        })
    }

    pub fn build_nl_prompt(
        &self,
        criteria: &[AcceptanceCriterion],
        context: &[ContextFile],
    ) -> Result<PromptBundle, PromptError> {
        check_criteria(criteria)?;
        let criteria_text = match criteria {
            [single] => single.text.clone(),
            many => format!("\n{}", bullets(many)),
        };
        let instruction = fill(&self.templates.nl, "{criteria}", &criteria_text);
        self.fit(
            instruction,
            context.to_vec(),
            Vec::new(),
            PromptKind::NaturalLanguage,
            FeaturePlacement::None,
        )
    }

    /// The rendered `.feature` goes both into the instruction and, as a
    /// [`ContextKind::GherkinFeature`] file, at the end of the context.
    pub fn build_gs_prompt(
        &self,
        doc: &GherkinDocument,
        context: &[ContextFile],
    ) -> Result<PromptBundle, PromptError> {
        let instruction = fill(&self.templates.gs, "{gherkin}", &gherkin_prompt_body(doc));
        let feature = ContextFile::new(
            FEATURE_CONTEXT_PATH,
            render_gherkin(doc),
            ContextKind::GherkinFeature,
        )?;
        self.fit(
            instruction,
            context.to_vec(),
            vec![feature],
            PromptKind::GherkinStructured,
            FeaturePlacement::InstructionAndContext,
        )
    }

    pub fn build_gherkin_gen_prompt(
        &self,
        criteria: &[AcceptanceCriterion],
        reference: Option<&ContextFile>,
    ) -> Result<PromptBundle, PromptError> {
        check_criteria(criteria)?;
        let reference = match reference {
            Some(r) if r.kind == ContextKind::ReferenceDoc => r.clone(),
            _ => return Err(PromptError::MissingReference),
        };
        let instruction = fill(
            &self.templates.gherkin_gen,
            "{criteria_bullets}",
            &bullets(criteria),
        );
        self.fit(
            instruction,
            Vec::new(),
            vec![reference],
            PromptKind::GherkinGeneration,
            FeaturePlacement::None,
        )
    }

    /// Drop optional files from the end until the bundle fits; required
    /// files are appended after the optional ones and never dropped.
    fn fit(
        &self,
        instruction: String,
        mut optional: Vec<ContextFile>,
        required: Vec<ContextFile>,
        kind: PromptKind,
        feature_placement: FeaturePlacement,
    ) -> Result<PromptBundle, PromptError> {
        let fixed = instruction.chars().count()
            + required
                .iter()
                .map(ContextFile::serialized_len)
                .sum::<usize>();
        if fixed > self.budget_chars {
            return Err(PromptError::BudgetExceeded {
                needed: fixed,
                budget: self.budget_chars,
            });
        }
        let mut total = fixed
            + optional
                .iter()
                .map(ContextFile::serialized_len)
                .sum::<usize>();
        let mut dropped = Vec::new();
        while total > self.budget_chars {
            let file = optional.pop().expect("fixed part fits, so something is droppable");
            total -= file.serialized_len();
            dropped.push(file.virtual_path);
        }
        optional.extend(required);
        let bundle = PromptBundle {
            instruction,
            context: optional,
            kind,
            budget_chars: self.budget_chars,
            dropped,
            feature_placement,
        };
        debug_assert!(bundle.serialized_len() <= self.budget_chars);
        Ok(bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedContext {
    pub files: Vec<ContextFile>,
    /// Files that matched but did not fit, in the order they were dropped.
    pub dropped: Vec<String>,
    /// Files that matched but could not be read.
    pub unreadable: Vec<(String, String)>,
}

/// Collect the files under `root` matching any of `include_globs`.
///
/// Order is depth first (shallower files earlier), then lexicographic by
/// path. When the serialized total exceeds `budget_chars`, whole files are
/// dropped from the end of that order.
pub fn pack_context(
    root: &Path,
    include_globs: &[String],
    budget_chars: usize,
) -> Result<PackedContext, PromptError> {
    let mut builder = GlobSetBuilder::new();
    for pattern in include_globs {
        builder.add(Glob::new(pattern)?);
    }
    let globs = builder.build()?;

    let mut matched: Vec<(usize, String)> = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            let rel = e.path().strip_prefix(root).ok()?;
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            globs.is_match(&rel).then(|| (rel.matches('/').count(), rel))
        })
        .collect();
    matched.sort();

    let mut files = Vec::new();
    let mut unreadable = Vec::new();
    for (_, rel) in &matched {
        match std::fs::read_to_string(root.join(rel)) {
            Ok(content) => files.push(ContextFile::new(rel.clone(), content, ContextKind::Code)?),
            Err(e) => unreadable.push((rel.clone(), e.to_string())),
        }
    }
    if files.is_empty() && !unreadable.is_empty() {
        return Err(PromptError::NothingReadable(unreadable.len()));
    }

    let mut total: usize = files.iter().map(ContextFile::serialized_len).sum();
    let mut dropped = Vec::new();
    while total > budget_chars {
        let Some(file) = files.pop() else { break };
        total -= file.serialized_len();
        dropped.push(file.virtual_path);
    }
    Ok(PackedContext {
        files,
        dropped,
        unreadable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gherkin::{parse_gherkin, Feature, Scenario, Step, StepKeyword};

    fn criteria(texts: &[&str]) -> Vec<AcceptanceCriterion> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| AcceptanceCriterion::new(format!("ac-{i}"), *t).unwrap())
            .collect()
    }

    const DIGIT_FEATURE: &str = "Feature: Digit recognition
  Scenario: Classification accuracy
    Given I have a trained digit recognition model
    And  a test set
    When I classify the test set using that model
    Then  I get an accuracy of more than 95 percent
";

    #[test]
    fn criteria_list_skips_comments_and_bullets() {
        let list = AcceptanceCriterion::parse_list("# story 12\n- first one\n\n  * second\nthird\n");
        let texts: Vec<_> = list.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["first one", "second", "third"]);
        assert_eq!(list[2].id, "ac-3");
        assert!(AcceptanceCriterion::parse_list("# nothing\n\n").is_empty());
    }

    #[test]
    fn nl_prompt_single_criterion() {
        let bundle = PromptBuilder::default()
            .build_nl_prompt(&criteria(&["should return hello world"]), &[])
            .unwrap();
        assert_eq!(
            bundle.instruction,
            "Write pytest tests for the following acceptance criteria: should return hello world"
        );
        assert_eq!(bundle.user_message(), bundle.instruction);
    }

    #[test]
    fn nl_prompt_bullets_keep_order() {
        let bundle = PromptBuilder::default()
            .build_nl_prompt(&criteria(&["first", "second"]), &[])
            .unwrap();
        assert_eq!(
            bundle.instruction,
            "Write pytest tests for the following acceptance criteria:\n- first\n- second"
        );
    }

    #[test]
    fn empty_criteria() {
        let builder = PromptBuilder::default();
        assert!(matches!(
            builder.build_nl_prompt(&[], &[]),
            Err(PromptError::EmptyCriteria)
        ));
        assert!(AcceptanceCriterion::new("x", "   ").is_err());
    }

    #[test]
    fn gs_prompt_reproduces_structured_prompt() {
        let doc = parse_gherkin(DIGIT_FEATURE).unwrap();
        let bundle = PromptBuilder::default().build_gs_prompt(&doc, &[]).unwrap();
        let expected = "Given the files, generate me a pytest for the acceptance criteria:

Given I have a trained digit recognition model
And  a test set
When I classify the test set using that model
Then  I get an accuracy of more than 95 percent

Use good coding python conventions, and make sure to import any packages / fixture that you use. Do not refer to any non-existent resources. When importing files, take the project structure into account.";
        assert_eq!(bundle.instruction, expected);
        assert!(bundle
            .instruction
            .contains("Then  I get an accuracy of more than 95 percent"));
        let feature = bundle.context.last().unwrap();
        assert_eq!(feature.kind, ContextKind::GherkinFeature);
        assert_eq!(feature.content, render_gherkin(&doc));
        assert_eq!(bundle.feature_placement, FeaturePlacement::InstructionAndContext);
    }

    #[test]
    fn gs_prompt_minimal_doc() {
        let doc = GherkinDocument::synthesized(Feature {
            name: "F".into(),
            description: String::new(),
            scenarios: vec![Scenario {
                name: "S".into(),
                steps: vec![Step::new(StepKeyword::Given, "a program")],
            }],
        });
        let bundle = PromptBuilder::default().build_gs_prompt(&doc, &[]).unwrap();
        let (head, rest) = bundle.instruction.split_once("\n\n").unwrap();
        let (body, _footer) = rest.split_once("\n\n").unwrap();
        assert!(head.starts_with("Given the files"));
        assert_eq!(body, "Given a program");
    }

    #[test]
    fn gs_prompt_is_deterministic() {
        let doc = parse_gherkin(DIGIT_FEATURE).unwrap();
        let ctx = vec![ContextFile::new("src/a.py", "x = 1\n", ContextKind::Code).unwrap()];
        let builder = PromptBuilder::default();
        let a = builder.build_gs_prompt(&doc, &ctx).unwrap();
        let b = builder.build_gs_prompt(&doc, &ctx).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.user_message(), b.user_message());
    }

    #[test]
    fn gherkin_generation_prompt() {
        let reference =
            ContextFile::new("gherkin-reference.md", "Feature ...", ContextKind::ReferenceDoc)
                .unwrap();
        let bundle = PromptBuilder::default()
            .build_gherkin_gen_prompt(
                &criteria(&[
                    "the function should log hello world to the console.",
                    "the function should recognize more than 95 percent of digits correctly.",
                ]),
                Some(&reference),
            )
            .unwrap();
        assert_eq!(
            bundle.instruction,
            "Given the Gherkin reference, generate me Gherkin syntax-compliant instructions for the following acceptance criteria:
- the function should log hello world to the console.
- the function should recognize more than 95 percent of digits correctly.
Write them in an explicit way to be easily testable"
        );
        assert_eq!(bundle.context, vec![reference.clone()]);

        let one = PromptBuilder::default()
            .build_gherkin_gen_prompt(&criteria(&["only"]), Some(&reference))
            .unwrap();
        assert_eq!(one.instruction.matches("\n- ").count(), 1);
    }

    #[test]
    fn gherkin_generation_needs_reference() {
        let builder = PromptBuilder::default();
        assert!(matches!(
            builder.build_gherkin_gen_prompt(&criteria(&["x"]), None),
            Err(PromptError::MissingReference)
        ));
        let code = ContextFile::new("a.py", "", ContextKind::Code).unwrap();
        assert!(matches!(
            builder.build_gherkin_gen_prompt(&criteria(&["x"]), Some(&code)),
            Err(PromptError::MissingReference)
        ));
    }

    #[test]
    fn budget_drops_optional_files_from_the_end() {
        let ctx: Vec<_> = (0..3)
            .map(|i| {
                ContextFile::new(format!("f{i}.py"), "x".repeat(100), ContextKind::Code).unwrap()
            })
            .collect();
        let builder = PromptBuilder {
            budget_chars: 250,
            ..PromptBuilder::default()
        };
        let bundle = builder.build_nl_prompt(&criteria(&["c"]), &ctx).unwrap();
        assert!(bundle.serialized_len() <= 250);
        assert_eq!(bundle.serialized_len(), bundle.user_message().chars().count());
        assert_eq!(bundle.context.len(), 1);
        assert_eq!(bundle.dropped, ["f2.py", "f1.py"]);

        let tiny = PromptBuilder {
            budget_chars: 10,
            ..PromptBuilder::default()
        };
        assert!(matches!(
            tiny.build_nl_prompt(&criteria(&["c"]), &ctx),
            Err(PromptError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn context_paths_must_stay_inside() {
        for bad in ["../x.py", "/etc/passwd", "a/../../b", ""] {
            assert!(ContextFile::new(bad, "", ContextKind::Code).is_err(), "{bad}");
        }
        assert!(ContextFile::new("./a/b.py", "", ContextKind::Code).is_ok());
    }

    #[test]
    fn templates_need_placeholders() {
        let templates = PromptTemplates {
            nl: "no placeholder".into(),
            ..PromptTemplates::default()
        };
        assert!(PromptBuilder::new(templates, 100).is_err());
    }

    fn write(root: &Path, rel: &str, content: &str) {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, content).unwrap();
    }

    #[test]
    fn pack_single_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "src/hello_world/main.py", &"p".repeat(120));
        write(dir.path(), "README.txt", "ignored");
        let packed = pack_context(dir.path(), &["**/*.py".into()], 10_000).unwrap();
        assert_eq!(packed.files.len(), 1);
        assert_eq!(packed.files[0].virtual_path(), "src/hello_world/main.py");
        assert!(packed.dropped.is_empty());
    }

    #[test]
    fn pack_drops_whole_files() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.py", "b.py", "c.py"] {
            write(dir.path(), name, &"y".repeat(4000));
        }
        let packed = pack_context(dir.path(), &["*.py".into()], 10_000).unwrap();
        let kept: Vec<_> = packed.files.iter().map(|f| f.virtual_path()).collect();
        assert_eq!(kept, ["a.py", "b.py"]);
        assert_eq!(packed.dropped, ["c.py"]);
        assert!(packed.files.iter().all(|f| f.content.len() == 4000));
    }

    #[test]
    fn pack_order_is_depth_then_path() {
        let dir = tempfile::tempdir().unwrap();
        for rel in ["z.py", "a/b/c.py", "a/x.py", "b.py", "a/a.py"] {
            write(dir.path(), rel, "pass\n");
        }
        let globs = vec!["**/*.py".to_string()];
        let first = pack_context(dir.path(), &globs, 10_000).unwrap();
        let order: Vec<_> = first.files.iter().map(|f| f.virtual_path()).collect();
        assert_eq!(order, ["b.py", "z.py", "a/a.py", "a/x.py", "a/b/c.py"]);
        let second = pack_context(dir.path(), &globs, 10_000).unwrap();
        assert_eq!(first, second);
    }

    #[cfg(unix)]
    #[test]
    fn unreadable_files_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "ok.py", "pass\n");
        std::fs::write(dir.path().join("bad.py"), [0xff, 0xfe, 0x00]).unwrap();
        let packed = pack_context(dir.path(), &["*.py".into()], 10_000).unwrap();
        assert_eq!(packed.files.len(), 1);
        assert_eq!(packed.unreadable.len(), 1);

        std::fs::remove_file(dir.path().join("ok.py")).unwrap();
        assert!(matches!(
            pack_context(dir.path(), &["*.py".into()], 10_000),
            Err(PromptError::NothingReadable(1))
        ));
    }
}
