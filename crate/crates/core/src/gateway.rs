//! Completion backends.
//!
//! [`HttpBackend`] speaks the chat-completions JSON protocol and shares one
//! [`RateLimiter`] across every worker thread. [`ScriptedBackend`] replays a
//! canned corpus keyed by `(scenario, prompt kind, trial index)` and never
//! touches the network.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::prompting::{PromptBundle, PromptKind};

pub mod stub;

pub const DEFAULT_SYSTEM_PREAMBLE: &str =
    "You are a senior software engineer who writes concise, runnable tests.";
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend answered HTTP {code} after {attempts} attempt(s)")]
    HttpStatus { code: u16, attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot load scripted corpus {path}: {message}")]
    Corpus { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// One system message with the preamble, one user message with the
/// instruction followed by each context file behind its banner.
pub fn encode_bundle(bundle: &PromptBundle, system_preamble: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(system_preamble),
        ChatMessage::user(bundle.user_message()),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub seed: Option<i64>,
    pub max_tokens: u32,
    pub timeout: Duration,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        CompletionRequest {
            model: model.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            seed: None,
            max_tokens: 2048,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        let users: Vec<_> = self
            .messages
            .iter()
            .filter(|m| m.role == Role::User)
            .collect();
        if users.is_empty() {
            return Err(GatewayError::InvalidRequest("no user message".into()));
        }
        if users.iter().any(|m| m.content.is_empty()) {
            return Err(GatewayError::InvalidRequest("empty user message".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    fn wire_body(&self) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        });
        if let Some(seed) = self.seed {
            body["seed"] = seed.into();
        }
        body
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinishReason {
    Stop,
    Length,
    Other(String),
}

impl FinishReason {
    fn from_wire(s: Option<&str>) -> Self {
        match s {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(other) => FinishReason::Other(other.to_string()),
            None => FinishReason::Other("unspecified".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub latency: Duration,
    /// Retries spent before this response; 0 when the first attempt succeeded.
    pub retry_count: u32,
}

/// Identifies one trial's request for replay.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialKey {
    pub scenario: String,
    pub kind: PromptKind,
    pub trial: u32,
}

impl TrialKey {
    pub fn new(scenario: impl Into<String>, kind: impl Into<PromptKind>, trial: u32) -> Self {
        TrialKey {
            scenario: scenario.into(),
            kind: kind.into(),
            trial,
        }
    }
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.scenario, self.kind.short(), self.trial)
    }
}

/// Anything that can answer a completion request.
pub trait Backend: Send + Sync {
    fn complete(
        &self,
        request: &CompletionRequest,
        key: &TrialKey,
    ) -> Result<CompletionResponse, GatewayError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub api_key: Option<String>,
    pub max_retries: u32,
    pub retry_backoff_base: Duration,
    pub max_inflight: usize,
    pub requests_per_minute: usize,
    /// Length of the sliding window `requests_per_minute` is counted over.
    /// Always one minute outside of tests.
    pub rate_window: Duration,
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.into(),
            api_key: None,
            max_retries: 3,
            retry_backoff_base: Duration::from_millis(500),
            max_inflight: 4,
            requests_per_minute: 60,
            rate_window: Duration::from_secs(60),
        }
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        let url = url::Url::parse(&self.endpoint_url)
            .map_err(|e| GatewayError::InvalidConfig(format!("endpoint_url: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(GatewayError::InvalidConfig(format!(
                "endpoint_url scheme `{}` is not http(s)",
                url.scheme()
            )));
        }
        if self.max_inflight == 0 {
            return Err(GatewayError::InvalidConfig("max_inflight must be >= 1".into()));
        }
        if self.requests_per_minute == 0 {
            return Err(GatewayError::InvalidConfig(
                "requests_per_minute must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct LimiterState {
    inflight: usize,
    starts: VecDeque<Instant>,
}

/// Caps concurrent requests and request starts per sliding window.
#[derive(Debug)]
pub struct RateLimiter {
    max_inflight: usize,
    per_window: usize,
    window: Duration,
    state: Mutex<LimiterState>,
    freed: Condvar,
}

/// Held for the duration of one request; releases its slot on drop.
pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self
            .limiter
            .state
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        state.inflight -= 1;
        self.limiter.freed.notify_all();
    }
}

impl RateLimiter {
    pub fn new(max_inflight: usize, per_window: usize, window: Duration) -> Self {
        RateLimiter {
            max_inflight: max_inflight.max(1),
            per_window: per_window.max(1),
            window,
            state: Mutex::new(LimiterState {
                inflight: 0,
                starts: VecDeque::new(),
            }),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            let now = Instant::now();
            while state
                .starts
                .front()
                .is_some_and(|t| now.duration_since(*t) >= self.window)
            {
                state.starts.pop_front();
            }
            let has_slot = state.inflight < self.max_inflight;
            let has_budget = state.starts.len() < self.per_window;
            if has_slot && has_budget {
                state.inflight += 1;
                state.starts.push_back(now);
                return Permit { limiter: self };
            }
            state = if has_budget {
                self.freed.wait(state).unwrap_or_else(|e| e.into_inner())
            } else {
                let oldest = *state.starts.front().expect("window is full");
                let wait = self.window.saturating_sub(now.duration_since(oldest));
                self.freed
                    .wait_timeout(state, wait)
                    .unwrap_or_else(|e| e.into_inner())
                    .0
            };
        }
    }
}

enum AttemptError {
    Retryable(GatewayError),
    Fatal(GatewayError),
}

/// Chat-completions client over blocking HTTP.
pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint_url", &self.config.endpoint_url)
            .field("max_retries", &self.config.max_retries)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        config.check()?;
        let limiter = RateLimiter::new(
            config.max_inflight,
            config.requests_per_minute,
            config.rate_window,
        );
        Ok(HttpBackend {
            agent: ureq::AgentBuilder::new().build(),
            limiter,
            config,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Send `request`, retrying transport errors, 429 and 5xx with
    /// exponential backoff. Other 4xx answers fail immediately.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.check()?;
        let body = request.wire_body();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let started = Instant::now();
            let outcome = {
                let _permit = self.limiter.acquire();
                self.attempt(&body, request.timeout, attempts)
            };
            match outcome {
                Ok((content, finish_reason)) => {
                    return Ok(CompletionResponse {
                        content,
                        finish_reason,
                        latency: started.elapsed(),
                        retry_count: attempts - 1,
                    })
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(e)) => {
                    if attempts > self.config.max_retries {
                        return Err(e);
                    }
                    let factor = 1u32 << (attempts - 1).min(16);
                    std::thread::sleep(self.config.retry_backoff_base * factor);
                }
            }
        }
    }

    fn attempt(
        &self,
        body: &serde_json::Value,
        timeout: Duration,
        attempts: u32,
    ) -> Result<(String, FinishReason), AttemptError> {
        let mut req = self
            .agent
            .post(&self.config.endpoint_url)
            .timeout(timeout)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_string(&body.to_string()) {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| {
                    AttemptError::Retryable(transport_error(&e, attempts))
                })?;
                parse_completion(&text).map_err(AttemptError::Fatal)
            }
            Err(ureq::Error::Status(code, _)) => {
                let err = GatewayError::HttpStatus { code, attempts };
                if code == 429 || (500..600).contains(&code) {
                    Err(AttemptError::Retryable(err))
                } else {
                    Err(AttemptError::Fatal(err))
                }
            }
            Err(ureq::Error::Transport(t)) => {
                let message = t.to_string();
                if is_timeout(&t) {
                    Err(AttemptError::Retryable(GatewayError::Timeout { attempts }))
                } else {
                    Err(AttemptError::Retryable(GatewayError::Transport {
                        message,
                        attempts,
                    }))
                }
            }
        }
    }
}

fn transport_error(e: &std::io::Error, attempts: u32) -> GatewayError {
    if matches!(
        e.kind(),
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
    ) {
        GatewayError::Timeout { attempts }
    } else {
        GatewayError::Transport {
            message: e.to_string(),
            attempts,
        }
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    use std::error::Error;
    let mut source = t.source();
    while let Some(err) = source {
        if let Some(io) = err.downcast_ref::<std::io::Error>() {
            if matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            ) {
                return true;
            }
        }
        source = err.source();
    }
    t.to_string().contains("timed out")
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// Decode a chat-completions response body.
pub fn parse_completion(body: &str) -> Result<(String, FinishReason), GatewayError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedResponse("`choices` is empty".into()))?;
    let content = choice.message.content.unwrap_or_default();
    let finish = FinishReason::from_wire(choice.finish_reason.as_deref());
    if content.is_empty() && finish == FinishReason::Stop {
        return Err(GatewayError::MalformedResponse(
            "empty content with finish_reason `stop`".into(),
        ));
    }
    Ok((content, finish))
}

impl Backend for HttpBackend {
    fn complete(
        &self,
        request: &CompletionRequest,
        _key: &TrialKey,
    ) -> Result<CompletionResponse, GatewayError> {
        HttpBackend::complete(self, request)
    }
}

/// Replays canned responses. Lookup is total: unknown keys get `default`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptedBackend {
    pub corpus: BTreeMap<TrialKey, String>,
    pub default: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    #[serde(default)]
    default: Option<String>,
    #[serde(default)]
    default_file: Option<String>,
    #[serde(default)]
    response: Vec<CorpusEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusEntry {
    scenario: String,
    kind: PromptKind,
    /// Single indices or half-open `[start, end)` ranges.
    trials: Vec<TrialSpan>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    file: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TrialSpan {
    One(u32),
    Range([u32; 2]),
}

impl ScriptedBackend {
    pub fn new(default: impl Into<String>) -> Self {
        ScriptedBackend {
            corpus: BTreeMap::new(),
            default: default.into(),
        }
    }

    pub fn insert(&mut self, key: TrialKey, response: impl Into<String>) {
        self.corpus.insert(key, response.into());
    }

    pub fn lookup(&self, key: &TrialKey) -> &str {
        self.corpus.get(key).map_or(self.default.as_str(), String::as_str)
    }

    pub fn complete_scripted(&self, key: &TrialKey) -> CompletionResponse {
        CompletionResponse {
            content: self.lookup(key).to_string(),
            finish_reason: FinishReason::Stop,
            latency: Duration::ZERO,
            retry_count: 0,
        }
    }

    /// Load a TOML corpus. Response files are resolved against the corpus
    /// file's directory. Later entries override earlier ones.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let err = |message: String| GatewayError::Corpus {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let file: CorpusFile = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let read = |rel: &str| {
            std::fs::read_to_string(base.join(rel)).map_err(|e| err(format!("{rel}: {e}")))
        };

        let default = match (file.default, file.default_file) {
            (Some(text), None) => text,
            (None, Some(rel)) => read(&rel)?,
            (None, None) => String::new(),
            (Some(_), Some(_)) => {
                return Err(err("set only one of `default` and `default_file`".into()))
            }
        };
        let mut backend = ScriptedBackend::new(default);
        for entry in file.response {
            let response = match (entry.text, entry.file) {
                (Some(text), None) => text,
                (None, Some(rel)) => read(&rel)?,
                _ => return Err(err("each response needs exactly one of `text` and `file`".into())),
            };
            for span in entry.trials {
                let (start, end) = match span {
                    TrialSpan::One(i) => (i, i + 1),
                    TrialSpan::Range([a, b]) => (a, b),
                };
                for trial in start..end {
                    backend.insert(
                        TrialKey {
                            scenario: entry.scenario.clone(),
                            kind: entry.kind,
                            trial,
                        },
                        response.clone(),
                    );
                }
            }
        }
        Ok(backend)
    }

    /// Merge several corpora; later ones win on key collisions and supply
    /// the default when they define one.
    pub fn merge(mut self, other: ScriptedBackend) -> Self {
        self.corpus.extend(other.corpus);
        if !other.default.is_empty() {
            self.default = other.default;
        }
        self
    }
}

impl Backend for ScriptedBackend {
    fn complete(
        &self,
        request: &CompletionRequest,
        key: &TrialKey,
    ) -> Result<CompletionResponse, GatewayError> {
        request.check()?;
        Ok(self.complete_scripted(key))
    }
}
