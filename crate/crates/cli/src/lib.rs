//! The `acceptgen` command line.
//!
//! Exit codes: 0 success, 1 usage or data error, 2 unparseable Gherkin
//! (model output or input file), 3 backend failure.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};

use acceptgen::gateway::{
    encode_bundle, Backend, BackendConfig, CompletionRequest, HttpBackend, ScriptedBackend,
    TrialKey,
};
use acceptgen::gherkin::{is_valid, parse_gherkin, validate, LintFinding};
use acceptgen::harness::store::{read_records, StoreError};
use acceptgen::harness::{BackendKind, CampaignSpec, Harness, HarnessError, TrialRecord};
use acceptgen::metrics::{
    diff_summaries, render_report, summarize, CampaignSummary, EvalStage, MetricsError,
    PassRateDenominator, ReportFormat, StdConvention, SummaryOptions,
};
use acceptgen::postprocess::extract_code;
use acceptgen::prompting::{
    AcceptanceCriterion, ContextFile, ContextKind, PromptBuilder, PromptError, PromptKind,
    PromptStyle,
};

use config::{CliOverrides, ToolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Parse = 2,
    Backend = 3,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            status: ExitStatus::Usage,
            message: message.into(),
        }
    }

    fn parse(message: impl Into<String>) -> Self {
        CliError {
            status: ExitStatus::Parse,
            message: message.into(),
        }
    }

    fn backend(message: impl Into<String>) -> Self {
        CliError {
            status: ExitStatus::Backend,
            message: message.into(),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::usage(e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "acceptgen", version, about = "Generate and evaluate acceptance tests with an LLM")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file (default: $ACCEPTGEN_CONFIG, then ./acceptgen.toml)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Backend to use, overriding $ACCEPTGEN_BACKEND and the config file
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendArg>,
    /// Working directory for campaigns, sandboxes and outputs
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    /// Keep the sandbox of every trial whose repaired test fails
    #[arg(long, global = true)]
    pub keep_failures: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Live,
    Scripted,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Live => BackendKind::Live,
            BackendArg::Scripted => BackendKind::Scripted,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StyleArg {
    Nl,
    Gs,
}

impl From<StyleArg> for PromptStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Nl => PromptStyle::NaturalLanguage,
            StyleArg::Gs => PromptStyle::GherkinStructured,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Pre,
    Post,
    Both,
}

impl StageArg {
    fn stages(self) -> &'static [EvalStage] {
        match self {
            StageArg::Pre => &[EvalStage::PreRepair],
            StageArg::Post => &[EvalStage::PostRepair],
            StageArg::Both => &[EvalStage::PreRepair, EvalStage::PostRepair],
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DenominatorArg {
    AllFiles,
    ExecutableFiles,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StdArg {
    Sample,
    Population,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Files counted in the pass-rate denominator
    #[arg(long, value_enum)]
    pub pass_rate_denominator: Option<DenominatorArg>,
    /// Standard deviation convention for coverage
    #[arg(long, value_enum)]
    pub std: Option<StdArg>,
}

impl MetricArgs {
    fn apply(&self, mut opts: SummaryOptions) -> SummaryOptions {
        if let Some(d) = self.pass_rate_denominator {
            opts.pass_rate_denominator = match d {
                DenominatorArg::AllFiles => PassRateDenominator::AllFiles,
                DenominatorArg::ExecutableFiles => PassRateDenominator::ExecutableFiles,
            };
        }
        if let Some(s) = self.std {
            opts.std = match s {
                StdArg::Sample => StdConvention::Sample,
                StdArg::Population => StdConvention::Population,
            };
        }
        opts
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ask the model to turn acceptance criteria into a Gherkin feature
    GenGherkin {
        /// Acceptance criteria, one per line
        #[arg(long)]
        criteria: PathBuf,
        /// Gherkin reference document given to the model as context
        #[arg(long)]
        reference: PathBuf,
        /// Where to write the feature (default: <work-dir>/gherkin/<key>.feature)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Key used to look up scripted responses (default: criteria file stem)
        #[arg(long)]
        key: Option<String>,
    },
    /// Run a test-generation campaign for one scenario
    GenTests {
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum)]
        style: StyleArg,
        /// Number of trials (default from config)
        #[arg(long)]
        trials: Option<u32>,
        /// Trials run at once (default from config)
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Summarize campaign files into a metrics report
    Eval {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "post")]
        stage: StageArg,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Parse and lint a .feature file
    ValidateGherkin { file: PathBuf },
    /// Compare two campaigns of the same scenario (B minus A)
    ReportDiff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "post")]
        stage: StageArg,
        #[command(flatten)]
        metrics: MetricArgs,
    },
}

/// Parse `args` (including the program name) and run the command.
pub fn run(args: Vec<OsString>, out: &mut (dyn Write + Send), err: &mut dyn Write) -> ExitStatus {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return ExitStatus::Usage;
            }
            let _ = write!(out, "{rendered}");
            return ExitStatus::Success;
        }
    };
    match execute(cli, out) {
        Ok(()) => ExitStatus::Success,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.status
        }
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

fn load_config(global: &GlobalArgs) -> Result<ToolConfig, CliError> {
    let cli = CliOverrides {
        config: global.config.clone(),
        backend: global.backend.map(Into::into),
        work_dir: global.work_dir.clone(),
        keep_failures: global.keep_failures,
    };
    let cwd = std::env::current_dir().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(config::load(&cli, &env_var, &cwd)?)
}

fn execute(cli: Cli, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    match cli.command {
        Command::ValidateGherkin { file } => validate_gherkin(&file, out),
        Command::Eval {
            files,
            stage,
            format,
            out: target,
            metrics,
        } => {
            let cfg = load_config(&cli.global)?;
            eval(&files, stage, format, target.as_deref(), metrics.apply(cfg.metrics), out)
        }
        Command::ReportDiff { a, b, stage, metrics } => {
            let cfg = load_config(&cli.global)?;
            report_diff(&a, &b, stage, metrics.apply(cfg.metrics), out)
        }
        Command::GenGherkin {
            criteria,
            reference,
            out: target,
            key,
        } => {
            let cfg = load_config(&cli.global)?;
            gen_gherkin(&cfg, &criteria, &reference, target, key, out)
        }
        Command::GenTests {
            scenario,
            style,
            trials,
            parallelism,
        } => {
            let cfg = load_config(&cli.global)?;
            gen_tests(&cfg, &scenario, style.into(), trials, parallelism, out)
        }
    }
}

/// The backend selected by `cfg`. Scripted backends never open a socket.
pub fn make_backend(cfg: &ToolConfig) -> Result<Arc<dyn Backend>, CliError> {
    match cfg.backend {
        BackendKind::Scripted => {
            let mut backend = ScriptedBackend::new("");
            for path in &cfg.corpora {
                let corpus = ScriptedBackend::load(path).map_err(|e| CliError::usage(e.to_string()))?;
                backend = backend.merge(corpus);
            }
            Ok(Arc::new(backend))
        }
        BackendKind::Live => {
            let live = &cfg.live;
            let mut config = BackendConfig::new(live.endpoint_url.clone());
            config.api_key = live.api_key.clone();
            config.max_retries = live.max_retries;
            config.retry_backoff_base = live.retry_backoff;
            config.max_inflight = live.max_inflight;
            config.requests_per_minute = live.requests_per_minute;
            let backend = HttpBackend::new(config).map_err(|e| CliError::usage(e.to_string()))?;
            Ok(Arc::new(backend))
        }
    }
}

fn builder(cfg: &ToolConfig) -> Result<PromptBuilder, CliError> {
    PromptBuilder::new(cfg.templates.clone(), cfg.budget_chars).map_err(|e| CliError::usage(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn print_findings(findings: &[LintFinding], out: &mut dyn Write) {
    if findings.is_empty() {
        let _ = writeln!(out, "no findings");
    }
    for f in findings {
        let _ = writeln!(out, "{f}");
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn gen_gherkin(
    cfg: &ToolConfig,
    criteria_path: &Path,
    reference_path: &Path,
    target: Option<PathBuf>,
    key: Option<String>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let criteria = AcceptanceCriterion::parse_list(&read_file(criteria_path)?);
    let reference_name = reference_path
        .file_name()
        .map_or_else(|| "reference.md".into(), |n| n.to_string_lossy().into_owned());
    let reference = ContextFile::new(reference_name, read_file(reference_path)?, ContextKind::ReferenceDoc)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let bundle = match builder(cfg)?.build_gherkin_gen_prompt(&criteria, Some(&reference)) {
        Ok(b) => b,
        Err(PromptError::EmptyCriteria) => {
            return Err(CliError::usage(format!(
                "{}: EmptyCriteria: no acceptance criteria given",
                criteria_path.display()
            )))
        }
        Err(e) => return Err(CliError::usage(e.to_string())),
    };
    let key = key.unwrap_or_else(|| {
        criteria_path
            .file_stem()
            .map_or_else(|| "criteria".into(), |s| s.to_string_lossy().into_owned())
    });
    let target = target.unwrap_or_else(|| cfg.work_dir.join("gherkin").join(format!("{key}.feature")));

    let backend = make_backend(cfg)?;
    let mut request = CompletionRequest::new(
        cfg.params.model.clone(),
        encode_bundle(&bundle, &cfg.params.system_preamble),
    );
    request.temperature = cfg.params.temperature;
    request.seed = cfg.params.seed;
    request.max_tokens = cfg.params.max_tokens;
    request.timeout = cfg.params.timeout;
    let response = backend
        .complete(&request, &TrialKey::new(key.as_str(), PromptKind::GherkinGeneration, 0))
        .map_err(|e| CliError::backend(format!("backend failed: {e}")))?;

    let text = extract_code(&response.content)
        .map(|a| a.chosen_code().to_string())
        .unwrap_or_default();
    match parse_gherkin(&text) {
        Ok(doc) => {
            let mut body = text.trim_end().to_string();
            body.push('\n');
            write_file(&target, &body)?;
            let findings = validate(&doc);
            let _ = writeln!(
                out,
                "wrote {}: feature `{}` with {} scenario(s)",
                target.display(),
                doc.feature.name,
                doc.feature.scenarios.len()
            );
            print_findings(&findings, out);
            Ok(())
        }
        Err(errors) => {
            let raw_path = with_suffix(&target, ".raw.txt");
            let errors_path = with_suffix(&target, ".errors.txt");
            write_file(&raw_path, &response.content)?;
            let listing: String = errors.0.iter().map(|e| format!("{e}\n")).collect();
            write_file(&errors_path, &listing)?;
            Err(CliError::parse(format!(
                "model output is not valid Gherkin ({}); raw response saved to {}, errors to {}",
                errors,
                raw_path.display(),
                errors_path.display()
            )))
        }
    }
}

fn progress_line(record: &TrialRecord, n_trials: u32) -> String {
    let post = &record.post_repair;
    let coverage = record
        .coverage
        .map_or_else(|| "-".to_string(), |c| format!("{:.2}%", c.percent));
    let mut line = format!(
        "trial {:>3}/{n_trials}  pre={:?}  post={:?}  passed={}/{}  coverage={coverage}  repairs={}  {}ms",
        record.trial_index + 1,
        record.pre_repair.class,
        post.class,
        post.run.passed,
        post.run.executed,
        record.actions.len(),
        record.duration_ms,
    );
    if let Some(e) = &record.backend_error {
        line.push_str(&format!("  backend error: {e}"));
    }
    line
}

fn harness_error(e: HarnessError) -> CliError {
    match e {
        HarnessError::NoTrialStarted(n) => CliError::backend(format!(
            "none of the {n} trials could start: the backend failed every request"
        )),
        other => CliError::usage(other.to_string()),
    }
}

fn gen_tests(
    cfg: &ToolConfig,
    scenario_id: &str,
    style: PromptStyle,
    trials: Option<u32>,
    parallelism: Option<usize>,
    out: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let Some(scenario) = cfg.scenario(scenario_id) else {
        let ids = cfg.scenario_ids();
        let available = if ids.is_empty() { "none configured".to_string() } else { ids.join(", ") };
        return Err(CliError::usage(format!(
            "unknown scenario `{scenario_id}`; available: {available}"
        )));
    };
    let mut spec = CampaignSpec::new(scenario_id, style, cfg.backend);
    spec.n_trials = trials.unwrap_or(cfg.n_trials);
    spec.parallelism = parallelism.unwrap_or(cfg.parallelism);
    spec.check().map_err(harness_error)?;

    let harness = Harness {
        backend: make_backend(cfg)?,
        builder: builder(cfg)?,
        params: cfg.params.clone(),
        work_dir: cfg.work_dir.clone(),
        keep_failures: cfg.keep_failures,
    };
    let n_trials = spec.n_trials;
    let outcome = {
        let sink = Mutex::new(&mut *out);
        let progress = |record: &TrialRecord| {
            let mut w = sink.lock().unwrap_or_else(|e| e.into_inner());
            let _ = writeln!(w, "{}", progress_line(record, n_trials));
        };
        harness.run_campaign(scenario, &spec, &progress).map_err(harness_error)?
    };

    let skipped = outcome.records.len() - outcome.ran.len();
    let _ = writeln!(
        out,
        "\n{} record(s) in {} ({} run now, {} resumed)\n",
        outcome.records.len(),
        outcome.path.display(),
        outcome.ran.len(),
        skipped
    );
    let summaries = EvalStage::ALL
        .iter()
        .map(|stage| summarize(&outcome.records, *stage, cfg.metrics))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let _ = write!(out, "{}", render_report(&summaries, ReportFormat::Markdown));
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<TrialRecord>, CliError> {
    read_records(path).map_err(|e| match e {
        StoreError::Malformed { path, line, message } => CliError::usage(format!(
            "{}: line {line}: malformed record: {message}",
            path.display()
        )),
        other => CliError::usage(other.to_string()),
    })
}

fn metrics_error(path: &Path, e: MetricsError) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

fn summaries_for(
    files: &[PathBuf],
    stage: StageArg,
    opts: SummaryOptions,
) -> Result<Vec<CampaignSummary>, CliError> {
    let mut out = Vec::new();
    for file in files {
        let records = load_records(file)?;
        for stage in stage.stages() {
            out.push(summarize(&records, *stage, opts).map_err(|e| metrics_error(file, e))?);
        }
    }
    Ok(out)
}

fn eval(
    files: &[PathBuf],
    stage: StageArg,
    format: FormatArg,
    target: Option<&Path>,
    opts: SummaryOptions,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let summaries = summaries_for(files, stage, opts)?;
    let format = match format {
        FormatArg::Markdown => ReportFormat::Markdown,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let report = render_report(&summaries, format);
    match target {
        Some(path) => {
            write_file(path, &report)?;
            let _ = writeln!(out, "wrote {}", path.display());
        }
        None => {
            let _ = write!(out, "{report}");
        }
    }
    Ok(())
}

fn report_diff(
    a: &Path,
    b: &Path,
    stage: StageArg,
    opts: SummaryOptions,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if stage == StageArg::Both {
        return Err(CliError::usage("report-diff compares one stage; use --stage pre or post"));
    }
    let left = summaries_for(&[a.to_path_buf()], stage, opts)?;
    let right = summaries_for(&[b.to_path_buf()], stage, opts)?;
    let delta = diff_summaries(&left[0], &right[0]).map_err(|e| CliError::usage(e.to_string()))?;
    let _ = write!(out, "{}", delta.render_markdown());
    Ok(())
}

fn validate_gherkin(file: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let text = read_file(file)?;
    let doc = parse_gherkin(&text).map_err(|errors| {
        let listing: Vec<String> = errors.0.iter().map(ToString::to_string).collect();
        CliError::parse(format!("{}: cannot parse\n{}", file.display(), listing.join("\n")))
    })?;
    let findings = validate(&doc);
    print_findings(&findings, out);
    if is_valid(&findings) {
        Ok(())
    } else {
        Err(CliError::usage(format!("{}: lint errors found", file.display())))
    }
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
