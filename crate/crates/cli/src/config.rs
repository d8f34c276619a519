//! The `acceptgen.toml` file and how it combines with flags and environment.
//!
//! Every setting is resolved in the same order: command-line flag, then
//! environment variable, then config file, then built-in default. Relative
//! paths in the file are taken relative to the file's own directory, and
//! `{configdir}` inside runner commands expands to that directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use acceptgen::gherkin::parse_gherkin;
use acceptgen::harness::runner::RunnerAdapterConfig;
use acceptgen::harness::{BackendKind, BenchmarkScenario, RequestParams};
use acceptgen::metrics::SummaryOptions;
use acceptgen::postprocess::default_known_external;
use acceptgen::prompting::{AcceptanceCriterion, PromptTemplates, DEFAULT_BUDGET_CHARS};

pub const ENV_CONFIG: &str = "ACCEPTGEN_CONFIG";
pub const ENV_BACKEND: &str = "ACCEPTGEN_BACKEND";
pub const ENV_WORK_DIR: &str = "ACCEPTGEN_WORK_DIR";
pub const DEFAULT_API_KEY_ENV: &str = "ACCEPTGEN_API_KEY";
pub const DEFAULT_CONFIG_FILE: &str = "acceptgen.toml";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{what} `{path}` does not exist")]
    MissingPath { what: String, path: PathBuf },
    #[error("unknown backend `{0}` (expected live or scripted)")]
    BadBackend(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub work_dir: Option<PathBuf>,
    pub known_external: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub prompts: PromptsSection,
    #[serde(default)]
    pub metrics: SummaryOptions,
    #[serde(default)]
    pub campaign: CampaignSection,
    #[serde(default)]
    pub scenario: Vec<ScenarioSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<String>,
    pub endpoint_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub temperature: Option<f64>,
    pub seed: Option<i64>,
    pub max_tokens: Option<u32>,
    pub request_timeout_secs: Option<f64>,
    pub max_retries: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    pub max_inflight: Option<usize>,
    pub requests_per_minute: Option<usize>,
    pub system_preamble: Option<String>,
    #[serde(default)]
    pub corpora: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsSection {
    pub budget_chars: Option<usize>,
    pub nl_template: Option<String>,
    pub gs_template: Option<String>,
    pub gherkin_gen_template: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub n_trials: Option<u32>,
    pub parallelism: Option<usize>,
    pub timeout_secs: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub id: String,
    pub fixture_root: PathBuf,
    #[serde(default = "default_source_root")]
    pub source_root: String,
    pub criteria: PathBuf,
    pub gherkin: Option<PathBuf>,
    pub coverage_target: String,
    #[serde(default = "default_include")]
    pub include: Vec<String>,
    pub runner: RunnerSection,
}

fn default_source_root() -> String {
    "src".into()
}

fn default_include() -> Vec<String> {
    vec!["**/*.py".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerSection {
    pub command: Vec<String>,
    pub timeout_secs: Option<f64>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
}

/// Values given on the command line; `None` means not given.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub config: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub work_dir: Option<PathBuf>,
    pub keep_failures: bool,
}

#[derive(Debug, Clone)]
pub struct LiveSettings {
    pub endpoint_url: String,
    pub api_key: Option<String>,
    pub max_retries: u32,
    pub retry_backoff: Duration,
    pub max_inflight: usize,
    pub requests_per_minute: usize,
}

/// A fully resolved configuration.
#[derive(Debug, Clone)]
pub struct ToolConfig {
    /// The file the settings came from, if any.
    pub source: Option<PathBuf>,
    pub backend: BackendKind,
    pub live: LiveSettings,
    pub corpora: Vec<PathBuf>,
    pub params: RequestParams,
    pub templates: PromptTemplates,
    pub budget_chars: usize,
    pub metrics: SummaryOptions,
    pub n_trials: u32,
    pub parallelism: usize,
    pub work_dir: PathBuf,
    pub keep_failures: bool,
    pub known_external: BTreeMap<String, String>,
    pub scenarios: Vec<BenchmarkScenario>,
}

impl ToolConfig {
    pub fn scenario(&self, id: &str) -> Option<&BenchmarkScenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn scenario_ids(&self) -> Vec<&str> {
        self.scenarios.iter().map(|s| s.id.as_str()).collect()
    }
}

pub fn parse_backend(s: &str) -> Result<BackendKind, ConfigError> {
    match s {
        "live" => Ok(BackendKind::Live),
        "scripted" => Ok(BackendKind::Scripted),
        other => Err(ConfigError::BadBackend(other.into())),
    }
}

/// Which config file to read: `--config`, then `ACCEPTGEN_CONFIG`, then
/// `./acceptgen.toml` when present.
pub fn config_path(
    cli: &CliOverrides,
    env: &dyn Fn(&str) -> Option<String>,
    cwd: &Path,
) -> Option<PathBuf> {
    if let Some(p) = &cli.config {
        return Some(p.clone());
    }
    if let Some(p) = env(ENV_CONFIG).filter(|p| !p.is_empty()) {
        return Some(PathBuf::from(p));
    }
    let local = cwd.join(DEFAULT_CONFIG_FILE);
    local.is_file().then_some(local)
}

pub fn read_file_config(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Locate, read and resolve the configuration.
pub fn load(
    cli: &CliOverrides,
    env: &dyn Fn(&str) -> Option<String>,
    cwd: &Path,
) -> Result<ToolConfig, ConfigError> {
    match config_path(cli, env, cwd) {
        Some(path) => {
            let path = if path.is_absolute() { path } else { cwd.join(path) };
            let file = read_file_config(&path)?;
            resolve(file, Some(&path), cli, env, cwd)
        }
        None => resolve(FileConfig::default(), None, cli, env, cwd),
    }
}

fn existing(base: &Path, rel: &Path, what: &str) -> Result<PathBuf, ConfigError> {
    let path = base.join(rel);
    if path.exists() {
        Ok(path)
    } else {
        Err(ConfigError::MissingPath {
            what: what.into(),
            path,
        })
    }
}

fn secs(value: f64, path: &Path, key: &str) -> Result<Duration, ConfigError> {
    Duration::try_from_secs_f64(value).map_err(|e| ConfigError::Invalid {
        path: path.to_path_buf(),
        message: format!("{key}: {e}"),
    })
}

/// Combine the file with flags, environment and defaults.
pub fn resolve(
    file: FileConfig,
    source: Option<&Path>,
    cli: &CliOverrides,
    env: &dyn Fn(&str) -> Option<String>,
    cwd: &Path,
) -> Result<ToolConfig, ConfigError> {
    let base = source
        .and_then(Path::parent)
        .map_or_else(|| cwd.to_path_buf(), Path::to_path_buf);
    let origin = source.map_or_else(|| cwd.join("<defaults>"), Path::to_path_buf);
    let invalid = |message: String| ConfigError::Invalid {
        path: origin.clone(),
        message,
    };

    let backend = match (cli.backend, env(ENV_BACKEND).filter(|v| !v.is_empty()), &file.backend.kind) {
        (Some(kind), _, _) => kind,
        (None, Some(v), _) => parse_backend(&v)?,
        (None, None, Some(v)) => parse_backend(v)?,
        (None, None, None) => BackendKind::Scripted,
    };
    let work_dir = match (&cli.work_dir, env(ENV_WORK_DIR).filter(|v| !v.is_empty()), &file.work_dir) {
        (Some(p), _, _) => cwd.join(p),
        (None, Some(p), _) => cwd.join(p),
        (None, None, Some(p)) => base.join(p),
        (None, None, None) => cwd.join("acceptgen-work"),
    };

    let b = &file.backend;
    let api_key_env = b.api_key_env.clone().unwrap_or_else(|| DEFAULT_API_KEY_ENV.into());
    let live = LiveSettings {
        endpoint_url: b
            .endpoint_url
            .clone()
            .unwrap_or_else(|| "http://127.0.0.1:8000/v1/chat/completions".into()),
        api_key: env(&api_key_env).filter(|k| !k.is_empty()),
        max_retries: b.max_retries.unwrap_or(3),
        retry_backoff: Duration::from_millis(b.retry_backoff_ms.unwrap_or(500)),
        max_inflight: b.max_inflight.unwrap_or(4),
        requests_per_minute: b.requests_per_minute.unwrap_or(60),
    };
    let corpora = b
        .corpora
        .iter()
        .map(|p| existing(&base, p, "scripted corpus"))
        .collect::<Result<Vec<_>, _>>()?;

    let mut params = RequestParams::default();
    if let Some(model) = &b.model {
        params.model = model.clone();
    }
    if let Some(t) = b.temperature {
        params.temperature = t;
    }
    params.seed = b.seed.or(params.seed);
    if let Some(m) = b.max_tokens {
        params.max_tokens = m;
    }
    if let Some(t) = b.request_timeout_secs {
        params.timeout = secs(t, &origin, "backend.request_timeout_secs")?;
    }
    if let Some(p) = &b.system_preamble {
        params.system_preamble = p.clone();
    }

    let mut templates = PromptTemplates::default();
    let p = &file.prompts;
    if let Some(t) = &p.nl_template {
        templates.nl = t.clone();
    }
    if let Some(t) = &p.gs_template {
        templates.gs = t.clone();
    }
    if let Some(t) = &p.gherkin_gen_template {
        templates.gherkin_gen = t.clone();
    }
    templates.check().map_err(|e| invalid(format!("prompts: {e}")))?;

    let mut known_external = default_known_external();
    if let Some(rel) = &file.known_external {
        let path = existing(&base, rel, "known_external table")?;
        known_external.extend(read_known_external(&path)?);
    }

    let runner_timeout = match file.campaign.timeout_secs {
        Some(t) => secs(t, &origin, "campaign.timeout_secs")?,
        None => Duration::from_secs(60),
    };
    let mut scenarios = Vec::new();
    for section in &file.scenario {
        if scenarios.iter().any(|s: &BenchmarkScenario| s.id == section.id) {
            return Err(invalid(format!("scenario `{}` is defined twice", section.id)));
        }
        scenarios.push(scenario(section, &base, runner_timeout, &known_external, &origin)?);
    }

    Ok(ToolConfig {
        source: source.map(Path::to_path_buf),
        backend,
        live,
        corpora,
        params,
        templates,
        budget_chars: p.budget_chars.unwrap_or(DEFAULT_BUDGET_CHARS),
        metrics: file.metrics,
        n_trials: file.campaign.n_trials.unwrap_or(100),
        parallelism: file.campaign.parallelism.unwrap_or(1),
        work_dir,
        keep_failures: cli.keep_failures,
        known_external,
        scenarios,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KnownExternalFile {
    imports: BTreeMap<String, String>,
}

pub fn read_known_external(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: KnownExternalFile = toml::from_str(&text).map_err(|e| ConfigError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(file.imports)
}

fn scenario(
    section: &ScenarioSection,
    base: &Path,
    default_timeout: Duration,
    known_external: &BTreeMap<String, String>,
    origin: &Path,
) -> Result<BenchmarkScenario, ConfigError> {
    let what = |field: &str| format!("scenario `{}` {field}", section.id);
    let invalid = |message: String| ConfigError::Invalid {
        path: origin.to_path_buf(),
        message,
    };
    let fixture_root = existing(base, &section.fixture_root, &what("fixture_root"))?;
    let criteria_path = existing(base, &section.criteria, &what("criteria"))?;
    let criteria_text = std::fs::read_to_string(&criteria_path).map_err(|source| ConfigError::Read {
        path: criteria_path.clone(),
        source,
    })?;
    let criteria = AcceptanceCriterion::parse_list(&criteria_text);
    let gherkin = match &section.gherkin {
        None => None,
        Some(rel) => {
            let path = existing(base, rel, &what("gherkin"))?;
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read {
                path: path.clone(),
                source,
            })?;
            Some(parse_gherkin(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?)
        }
    };
    existing(&fixture_root, Path::new(&section.coverage_target), &what("coverage_target"))?;

    let configdir = base.to_string_lossy();
    let command = section
        .runner
        .command
        .iter()
        .map(|part| part.replace("{configdir}", &configdir))
        .collect();
    let mut runner = RunnerAdapterConfig::new(command).map_err(|e| invalid(format!("{}: {e}", what("runner"))))?;
    runner.timeout = match section.runner.timeout_secs {
        Some(t) => secs(t, origin, &what("runner.timeout_secs"))?,
        None => default_timeout,
    };
    runner.env = section.runner.env.clone();

    let scenario = BenchmarkScenario {
        id: section.id.clone(),
        fixture_root,
        source_root: section.source_root.clone(),
        criteria,
        gherkin,
        runner,
        coverage_target: section.coverage_target.clone(),
        include_globs: section.include.clone(),
        known_external: known_external.clone(),
    };
    scenario.check().map_err(|e| invalid(e.to_string()))?;
    Ok(scenario)
}
