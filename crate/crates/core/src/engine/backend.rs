//! Backends answering prompts: an OpenAI-compatible HTTP client, a replay
//! store keyed by prompt hash, and the offline taint engine.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::prompt::PromptBundle;
use crate::design::Design;
use crate::report::mock_report;
use crate::taint::{finding_from_taint, TaintEngine, TaintState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Http,
    Replay,
    MockTaint,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Http => "http",
            BackendKind::Replay => "replay",
            BackendKind::MockTaint => "mock-taint",
        })
    }
}

fn default_api_key_env() -> String {
    "LLM_IFT_API_KEY".into()
}
fn default_max_retries() -> u32 {
    2
}
fn default_timeout() -> u64 {
    120
}
fn default_backoff() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures_dir: Option<PathBuf>,
    /// Delay before the first retry; doubled for each further attempt.
    #[serde(default = "default_backoff")]
    pub initial_backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::MockTaint,
            endpoint: None,
            model: None,
            api_key_env: default_api_key_env(),
            temperature: 0.0,
            max_retries: default_max_retries(),
            timeout_secs: default_timeout(),
            fixtures_dir: None,
            initial_backoff_ms: default_backoff(),
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Replay,
            fixtures_dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn http(endpoint: &str, model: &str) -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model: Some(model.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::Config(m.to_string()));
        match self.kind {
            BackendKind::Http if self.endpoint.as_deref().unwrap_or("").is_empty() => {
                bad("http backend requires `endpoint`")
            }
            BackendKind::Http if self.model.as_deref().unwrap_or("").is_empty() => bad("http backend requires `model`"),
            BackendKind::Replay if self.fixtures_dir.is_none() => bad("replay backend requires `fixtures_dir`"),
            _ if !(0.0..=2.0).contains(&self.temperature) => bad("temperature must be within 0.0..=2.0"),
            _ if self.timeout_secs == 0 => bad("timeout_secs must be positive"),
            _ => Ok(()),
        }
    }

    /// A backend for one design. HTTP and replay backends ignore the design;
    /// the taint backend derives its answers from it.
    pub fn instantiate<'d>(&self, design: &'d Design) -> Result<Box<dyn Backend + 'd>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Http => Box::new(HttpBackend::new(self.clone())?),
            BackendKind::Replay => Box::new(ReplayBackend::new(self.fixtures_dir.clone().expect("validated"))),
            BackendKind::MockTaint => Box::new(MockTaintBackend::new(design)),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no replay fixture {} for this prompt", .path.display())]
    FixtureMiss { key: String, path: PathBuf },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("cannot write fixture {}: {message}", .path.display())]
    Record { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    Module(String),
    Report,
    Monolithic,
}

pub struct Request<'a> {
    pub prompt: &'a PromptBundle,
    pub task: &'a Task,
    /// 0 for the first prompt, 1 for the repair prompt.
    pub attempt: u32,
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError>;
}

/// Hex SHA-256 over the length-prefixed system and user texts.
pub fn fixture_key(p: &PromptBundle) -> String {
    let mut h = Sha256::new();
    for part in [&p.system_text, &p.user_text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn fixture_path(dir: &Path, p: &PromptBundle) -> PathBuf {
    dir.join(format!("{}.txt", fixture_key(p)))
}

pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: PathBuf) -> Self {
        ReplayBackend { dir }
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError> {
        let path = fixture_path(&self.dir, req.prompt);
        std::fs::read_to_string(&path).map_err(|_| BackendError::FixtureMiss {
            key: fixture_key(req.prompt),
            path,
        })
    }
}

/// Passes requests to `inner` and stores every reply as a replay fixture.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, dir: PathBuf) -> Self {
        RecordingBackend { inner, dir }
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError> {
        let reply = self.inner.complete(req)?;
        let path = fixture_path(&self.dir, req.prompt);
        let io = |e: std::io::Error| BackendError::Record {
            path: path.clone(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        std::fs::write(&path, &reply).map_err(io)?;
        Ok(reply)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let endpoint = config.endpoint.clone().expect("validated").trim_end_matches('/').to_string();
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint
        } else {
            format!("{endpoint}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend { config, url, client })
    }

    fn body(&self, p: &PromptBundle) -> Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": p.system_text},
                {"role": "user", "content": p.user_text},
            ],
            "temperature": self.config.temperature,
        })
    }

    /// One request. `Err((retryable, message))` on failure.
    fn attempt(&self, body: &Value, key: Option<&str>) -> Result<String, (bool, String)> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(k) = key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| (true, e.to_string()))?;
        if !status.is_success() {
            let retry = status.as_u16() == 429 || status.is_server_error();
            let snippet: String = text.chars().take(200).collect();
            return Err((retry, format!("HTTP {status}: {snippet}")));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| (false, format!("response is not JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (false, "response has no choices[0].message.content".to_string()))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError> {
        let key = std::env::var(&self.config.api_key_env).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            log::warn!("{} is not set; sending requests without authorization", self.config.api_key_env);
        }
        let body = self.body(req.prompt);
        let total = self.config.max_retries + 1;
        let mut delay = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, key.as_deref()) {
                Ok(text) => return Ok(text),
                Err((retryable, message)) => {
                    if !retryable || attempts >= total {
                        return Err(BackendError::Transport { attempts, message });
                    }
                    log::warn!("attempt {attempts}/{total} failed ({message}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }
}

/// Answers every prompt from the taint fixpoint of the design's seeds.
pub struct MockTaintBackend<'d> {
    design: &'d Design,
    state: OnceLock<TaintState>,
}

impl<'d> MockTaintBackend<'d> {
    pub fn new(design: &'d Design) -> Self {
        MockTaintBackend {
            design,
            state: OnceLock::new(),
        }
    }

    pub fn state(&self) -> &TaintState {
        self.state.get_or_init(|| {
            TaintEngine::new(&self.design.unit, &self.design.graph, self.design.deps)
                .propagate(&self.design.unit, &self.design.seeds)
                .expect("design seeds are resolved")
        })
    }
}

impl Backend for MockTaintBackend<'_> {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError> {
        let state = self.state();
        Ok(match req.task {
            Task::Module(m) => finding_from_taint(m, state, &self.design.unit).to_reply_json(),
            Task::Report | Task::Monolithic => mock_report(self.design, state).to_canonical_json(),
        })
    }
}
