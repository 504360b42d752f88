//! Client for a text-generation endpoint with retries and a replay cache.
//!
//! Requests use a minimal JSON shape `{prompt, n, temperature, top_p,
//! max_tokens, stop}`. [`ApiKind::ChatCompletions`] maps it onto the common
//! chat-completions wire format instead. Responses are accepted in either
//! `{"samples": [...]}` or `{"choices": [...]}` form.
//!
//! With a cache directory configured, every response is stored under
//! `<cache>/<first 2 hex of digest>/<digest>.json`, where the digest is the
//! sha256 of the request's canonical JSON. A cached request never touches the
//! network, so a run can be replayed offline from its cache.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::selfplay::{SELFPLAY_SAMPLES, SELFPLAY_TEMPERATURE, SELFPLAY_TOP_P};
use crate::util::{sha256_hex, Semaphore};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenRequest {
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl GenRequest {
    /// `n` samples at the evaluation defaults (temperature 0.7, top-p 1).
    pub fn new(prompt: impl Into<String>, n: usize) -> Self {
        Self {
            prompt: prompt.into(),
            n,
            temperature: DEFAULT_TEMPERATURE,
            top_p: 1.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop: None,
        }
    }

    /// Self-play sampling: temperature 1.0, top-p 0.9, 5 samples.
    pub fn selfplay(prompt: impl Into<String>) -> Self {
        Self {
            temperature: SELFPLAY_TEMPERATURE,
            top_p: SELFPLAY_TOP_P,
            ..Self::new(prompt, SELFPLAY_SAMPLES)
        }
    }

    pub fn validate(&self, max_n: usize) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidRequest(m));
        if self.n == 0 || self.n > max_n {
            return bad(format!("n must be in 1..={max_n}, got {}", self.n));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        Ok(())
    }

    /// sha256 of the canonical JSON (object keys sorted).
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_value(self).expect("request serializes");
        sha256_hex(canonical.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenResponse {
    pub samples: Vec<String>,
    /// Usage block as returned by the endpoint, or `null`.
    #[serde(default)]
    pub usage: Value,
    pub latency_ms: u64,
    /// `n - samples.len()` when the endpoint returned fewer than requested.
    #[serde(default)]
    pub shortfall: usize,
    #[serde(skip)]
    pub from_cache: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiKind {
    #[default]
    Minimal,
    ChatCompletions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub endpoint: Option<String>,
    #[serde(default)]
    pub api: ApiKind,
    /// Sent as `model` for chat-completions endpoints.
    #[serde(default)]
    pub model: Option<String>,
    /// Name of the env var holding a bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_max_ms")]
    pub backoff_max_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_in_flight() -> usize {
    4
}
fn default_max_n() -> usize {
    64
}
fn default_max_retries() -> u32 {
    4
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_backoff_max_ms() -> u64 {
    30_000
}
fn default_timeout_s() -> u64 {
    300
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            api: ApiKind::default(),
            model: None,
            token_env: None,
            max_in_flight: default_in_flight(),
            max_n: default_max_n(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_ms(),
            backoff_max_ms: default_backoff_max_ms(),
            timeout_s: default_timeout_s(),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no endpoint configured and request {0} is not cached")]
    NotCached(String),
    #[error("token env var {0} is not set")]
    MissingToken(String),
    #[error("authentication failed (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("HTTP {status} after {attempts} attempts: {body}")]
    Server { status: u16, attempts: u32, body: String },
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request: GenRequest,
    response: GenResponse,
    timestamp: u64,
}

pub struct GenClient {
    config: GenConfig,
    agent: ureq::Agent,
    token: Option<String>,
    slots: Semaphore,
}

enum Attempt {
    Done(Value),
    Retry(GenError),
    Fatal(GenError),
}

impl GenClient {
    /// Reads the token from `config.token_env` now, so a missing variable
    /// fails early.
    pub fn new(config: GenConfig) -> Result<Self, GenError> {
        let token = match &config.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| GenError::MissingToken(var.clone()))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .build()
            .into();
        Ok(Self {
            slots: Semaphore::new(config.max_in_flight),
            config,
            agent,
            token,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    fn cache_path(&self, digest: &str) -> Option<PathBuf> {
        self.config
            .cache_dir
            .as_ref()
            .map(|d| d.join(&digest[..2]).join(format!("{digest}.json")))
    }

    pub fn generate(&self, req: &GenRequest) -> Result<GenResponse, GenError> {
        req.validate(self.config.max_n)?;
        let digest = req.digest();
        let cache_path = self.cache_path(&digest);
        if let Some(path) = &cache_path {
            if let Some(mut resp) = read_cache(path, req)? {
                log::debug!("cache hit {digest}");
                resp.from_cache = true;
                return Ok(resp);
            }
        }
        let Some(endpoint) = self.config.endpoint.clone() else {
            return Err(GenError::NotCached(digest));
        };

        let _slot = self.slots.acquire();
        let start = Instant::now();
        let body = self.call_with_retries(&endpoint, req)?;
        let latency_ms = start.elapsed().as_millis() as u64;
        let (mut samples, usage) = parse_response(&body)?;
        samples.truncate(req.n);
        let shortfall = req.n - samples.len();
        if shortfall > 0 {
            log::warn!("endpoint returned {} of {} samples", samples.len(), req.n);
        }
        let resp = GenResponse {
            samples,
            usage,
            latency_ms,
            shortfall,
            from_cache: false,
        };
        if let Some(path) = &cache_path {
            write_cache(path, req, &resp)?;
        }
        Ok(resp)
    }

    fn wire_body(&self, req: &GenRequest) -> Value {
        match self.config.api {
            ApiKind::Minimal => serde_json::to_value(req).expect("request serializes"),
            ApiKind::ChatCompletions => {
                let mut body = json!({
                    "messages": [{"role": "user", "content": req.prompt}],
                    "n": req.n,
                    "temperature": req.temperature,
                    "top_p": req.top_p,
                    "max_tokens": req.max_tokens,
                });
                if let Some(model) = &self.config.model {
                    body["model"] = json!(model);
                }
                if let Some(stop) = &req.stop {
                    body["stop"] = json!(stop);
                }
                body
            }
        }
    }

    fn call_with_retries(&self, endpoint: &str, req: &GenRequest) -> Result<Value, GenError> {
        let body = self.wire_body(req);
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(endpoint, &body, attempt) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("generation attempt {attempt}/{attempts} failed: {e}");
                    last = Some(e);
                    if attempt < attempts {
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << (attempt - 1).min(20))
            .min(self.config.backoff_max_ms);
        Duration::from_millis(ms)
    }

    fn attempt(&self, endpoint: &str, body: &Value, attempt: u32) -> Attempt {
        let mut request = self.agent.post(endpoint);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = match request.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(GenError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry(GenError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        };
        match status {
            200..=299 => match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fatal(GenError::Malformed(e.to_string())),
            },
            401 | 403 => Attempt::Fatal(GenError::Auth { status, body: text }),
            429 => Attempt::Retry(GenError::RateLimited { attempts: attempt }),
            500..=599 => Attempt::Retry(GenError::Server {
                status,
                attempts: attempt,
                body: text,
            }),
            _ => Attempt::Fatal(GenError::Server {
                status,
                attempts: attempt,
                body: text,
            }),
        }
    }
}

fn parse_response(body: &Value) -> Result<(Vec<String>, Value), GenError> {
    let usage = body.get("usage").cloned().unwrap_or(Value::Null);
    let as_text = |v: &Value| {
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| GenError::Malformed(format!("expected a string, got {v}")))
    };
    if let Some(samples) = body.get("samples").and_then(Value::as_array) {
        let samples = samples.iter().map(as_text).collect::<Result<_, _>>()?;
        return Ok((samples, usage));
    }
    if let Some(choices) = body.get("choices").and_then(Value::as_array) {
        let samples = choices
            .iter()
            .map(|c| {
                c.pointer("/message/content")
                    .or_else(|| c.get("text"))
                    .ok_or_else(|| GenError::Malformed("choice without message.content or text".into()))
                    .and_then(as_text)
            })
            .collect::<Result<_, _>>()?;
        return Ok((samples, usage));
    }
    Err(GenError::Malformed("response has neither `samples` nor `choices`".into()))
}

fn read_cache(path: &Path, req: &GenRequest) -> Result<Option<GenResponse>, GenError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let entry: CacheEntry = serde_json::from_slice(&bytes)
        .map_err(|e| GenError::Malformed(format!("cache entry {}: {e}", path.display())))?;
    // A digest collision would need to match the full request too.
    Ok((entry.request == *req).then_some(entry.response))
}

fn write_cache(path: &Path, req: &GenRequest, resp: &GenResponse) -> Result<(), GenError> {
    let dir = path.parent().expect("cache path has a parent");
    fs::create_dir_all(dir)?;
    let entry = CacheEntry {
        request: req.clone(),
        response: resp.clone(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, &entry).map_err(std::io::Error::from)?;
    tmp.write_all(b"\n")?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no program text in sample")]
pub struct EmptyExtraction;

/// The last fenced code block of `sample`, or the whole sample when it has
/// no fences. An unterminated final fence runs to the end of the text.
pub fn extract_program(sample: &str) -> Result<String, EmptyExtraction> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut open: Option<Vec<&str>> = None;
    for line in sample.lines() {
        if line.trim_start().starts_with("```") {
            match open.take() {
                Some(block) => blocks.push(block),
                None => open = Some(Vec::new()),
            }
        } else if let Some(block) = open.as_mut() {
            block.push(line);
        }
    }
    if let Some(block) = open {
        blocks.push(block);
    }
    let text = match blocks.last() {
        Some(block) => block.join("\n"),
        None => sample.to_string(),
    };
    let text = text.trim_matches('\n').trim_end();
    if text.trim().is_empty() {
        Err(EmptyExtraction)
    } else {
        Ok(text.to_string())
    }
}
