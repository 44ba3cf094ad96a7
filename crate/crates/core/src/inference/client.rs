//! Endpoint backends and the retry loop.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::wire::ChatRequest;
use super::{lexicon_hit, InferenceError};

/// Bearer token for the endpoint, read from the environment.
pub const API_KEY_ENV: &str = "XMA_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    /// Requests in flight at once.
    pub concurrency: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000".into(),
            model_name: "llama-3.2-11b-vision-instruct".into(),
            timeout_s: 60.0,
            max_retries: 3,
            temperature: 0.0,
            max_tokens: 16,
            backoff_base_ms: 500,
            backoff_cap_ms: 8_000,
            concurrency: 4,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(InferenceError::InvalidRequest(format!(
                "timeout_s must be positive, got {}",
                self.timeout_s
            )));
        }
        if self.concurrency == 0 {
            return Err(InferenceError::InvalidRequest("concurrency must be at least 1".into()));
        }
        Ok(())
    }

    /// Delay before retry number `attempt` (1-based), doubling and capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_cap_ms))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<Usage>,
}

/// Failure of a single attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum CallError {
    Timeout,
    Connect(String),
    Http { status: u16, body: String },
    Malformed(String),
}

impl CallError {
    pub fn is_transient(&self) -> bool {
        match self {
            CallError::Timeout | CallError::Connect(_) => true,
            CallError::Http { status, .. } => *status == 429 || *status >= 500,
            CallError::Malformed(_) => false,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            CallError::Timeout => "timeout",
            CallError::Connect(_) => "connect_error",
            CallError::Http { .. } => "http_error",
            CallError::Malformed(_) => "malformed",
        }
    }

    fn into_error(self, attempts: u32) -> InferenceError {
        match self {
            CallError::Timeout => InferenceError::Timeout { attempts },
            CallError::Connect(message) => InferenceError::Connect { attempts, message },
            CallError::Http { status, body } => InferenceError::Http {
                status,
                attempts,
                body,
            },
            CallError::Malformed(m) => InferenceError::Malformed(m),
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, CallError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&ChatRequest) -> Result<Completion, CallError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<Completion, CallError> {
        self(request)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub text: String,
    pub latency_ms: u64,
    pub usage: Option<Usage>,
    pub attempts: u32,
}

/// Call `backend`, retrying transient failures up to `max_retries` times
/// with capped exponential backoff.
pub fn call_with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    cfg: &EndpointConfig,
) -> Result<RawResponse, InferenceError> {
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        let started = Instant::now();
        match backend.complete(request) {
            Ok(c) => {
                return Ok(RawResponse {
                    text: c.text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    usage: c.usage,
                    attempts: attempt,
                })
            }
            Err(e) if e.is_transient() && attempt <= cfg.max_retries => {
                std::thread::sleep(cfg.backoff(attempt));
            }
            Err(e) => return Err(e.into_error(attempt)),
        }
    }
}

/// HTTP client for `POST {base_url}/v1/chat/completions`.
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: &EndpointConfig) -> Result<Self, InferenceError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            url: format!("{}/v1/chat/completions", cfg.base_url.trim_end_matches('/')),
            agent,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }
}

fn classify(err: ureq::Error) -> CallError {
    match err {
        ureq::Error::Timeout(_) => CallError::Timeout,
        ureq::Error::Io(e)
            if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) =>
        {
            CallError::Timeout
        }
        ureq::Error::StatusCode(status) => CallError::Http {
            status,
            body: String::new(),
        },
        other => CallError::Connect(other.to_string()),
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: serde_json::Value,
}

/// Extract the assistant text from a chat-completions response body.
pub(crate) fn parse_completion(body: &str) -> Result<Completion, CallError> {
    let parsed: CompletionBody =
        serde_json::from_str(body).map_err(|e| CallError::Malformed(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| CallError::Malformed("no choices".into()))?;
    let text = match choice.message.content {
        serde_json::Value::String(s) => s,
        serde_json::Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(|t| t.as_str()))
            .collect::<Vec<_>>()
            .join(""),
        other => return Err(CallError::Malformed(format!("unexpected content {other}"))),
    };
    Ok(Completion {
        text,
        usage: parsed.usage,
    })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, CallError> {
        let body = serde_json::to_vec(request).expect("request serializes");
        let mut req = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(&body[..]).map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify)?;
        if !(200..300).contains(&status) {
            return Err(CallError::Http { status, body: text });
        }
        parse_completion(&text)
    }
}

/// Offline backend: answers `yes` iff the query block contains a lexicon
/// term. Counts calls so cache behaviour can be observed.
#[derive(Debug, Default)]
pub struct StubBackend {
    lexicon: Vec<String>,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn new<S: AsRef<str>>(lexicon: &[S]) -> Self {
        StubBackend {
            lexicon: lexicon.iter().map(|s| s.as_ref().to_string()).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for StubBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, CallError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let query = request
            .query_text()
            .ok_or_else(|| CallError::Malformed("request has no query text".into()))?;
        let answer = if lexicon_hit(query, &self.lexicon) { "yes" } else { "no" };
        Ok(Completion {
            text: answer.to_string(),
            usage: None,
        })
    }
}
