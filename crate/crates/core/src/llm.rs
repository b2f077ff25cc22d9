//! Chat-completion client plus a deterministic offline stub.
//!
//! The remote path speaks the OpenAI-compatible `/chat/completions` JSON
//! shape: one user message carrying the whole prompt, temperature and token
//! cap from config, response text read from `choices[0].message.content`.
//! Every call is stateless; nothing from one completion feeds the next.
//!
//! Transient failures (rate limits, timeouts, connection drops, 5xx) retry
//! with exponential backoff and full jitter; auth failures, other 4xx, and
//! malformed bodies do not. At most `max_concurrency` requests are in flight
//! per client, enforced by a counting gate.
//!
//! The stub answers like a rule-driven analyst: it parses the test subgraph
//! back out of the prompt text, runs the detectors at default thresholds,
//! and renders the verdict in the prompt's answer format. It never sees
//! ground truth.

use std::collections::BTreeSet;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{test_section, PromptBundle};
use crate::serialize::{parse_serialized, TextParseError};
use crate::typology::{detect, DetectorConfig, PatternKind};

#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub max_concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4o".to_string(),
            api_key: None,
            temperature: 0.0,
            max_output_tokens: 512,
            request_timeout: Duration::from_secs(60),
            max_retries: 3,
            max_concurrency: 4,
        }
    }
}

impl LlmConfig {
    /// Defaults overridden by `LLM_API_KEY`, `LLM_BASE_URL`, `LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut cfg = LlmConfig::default();
        if let Ok(key) = std::env::var("LLM_API_KEY") {
            if !key.is_empty() {
                cfg.api_key = Some(key);
            }
        }
        if let Ok(url) = std::env::var("LLM_BASE_URL") {
            if !url.is_empty() {
                cfg.base_url = url;
            }
        }
        if let Ok(model) = std::env::var("LLM_MODEL") {
            if !model.is_empty() {
                cfg.model = model;
            }
        }
        cfg
    }

    fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidConfig("temperature must be >= 0".into()));
        }
        if self.max_concurrency < 1 {
            return Err(LlmError::InvalidConfig("max_concurrency must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// The exact request body sent per attempt. Identical prompts produce
/// identical bodies: there is no conversation state to leak between calls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Completion {
    /// Verbatim model output, unmodified.
    pub text: String,
    pub latency: Duration,
    pub attempts: u32,
    pub token_usage: Option<TokenUsage>,
}

/// Per-attempt failure, as the transport saw it.
#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("authentication rejected with status {status}")]
    Auth { status: u16 },
    #[error("rate limited")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("connection failure: {0}")]
    Connect(String),
    #[error("endpoint returned status {status}")]
    Status { status: u16, body: String },
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::RateLimited | TransportError::Timeout | TransportError::Connect(_) => {
                true
            }
            TransportError::Status { status, .. } => *status >= 500,
            TransportError::Auth { .. } => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no API credentials: set LLM_API_KEY")]
    MissingCredentials,
    #[error("invalid client config: {0}")]
    InvalidConfig(String),
    #[error("authentication failed with status {status}")]
    Auth { status: u16 },
    #[error("still rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("endpoint error, status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
    #[error("prompt contains no test section")]
    NoTestSection,
    #[error("test section does not parse: {0}")]
    UnparseableTest(#[from] TextParseError),
}

/// One request attempt. Implementations return the raw response body; the
/// client owns retry policy and JSON interpretation.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(cfg: &LlmConfig) -> Result<Self, LlmError> {
        let api_key = cfg.api_key.clone().ok_or(LlmError::MissingCredentials)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        Ok(HttpTransport { client, url, api_key })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Connect(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| TransportError::Connect(e.to_string()))?;
        match status {
            200..=299 => Ok(body),
            401 | 403 => Err(TransportError::Auth { status }),
            429 => Err(TransportError::RateLimited),
            _ => Err(TransportError::Status { status, body }),
        }
    }
}

/// Counting gate bounding in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

struct GatePermit<'a>(&'a Gate);

impl Gate {
    fn new(permits: usize) -> Gate {
        Gate { permits: Mutex::new(permits), available: Condvar::new() }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut permits = self.permits.lock().expect("gate lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("gate wait");
        }
        *permits -= 1;
        GatePermit(self)
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("gate lock") += 1;
        self.0.available.notify_one();
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct Client<T: Transport> {
    cfg: LlmConfig,
    transport: T,
    gate: Gate,
    sleeper: Sleeper,
}

impl Client<HttpTransport> {
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        let transport = HttpTransport::new(&cfg)?;
        Client::with_transport(cfg, transport)
    }
}

impl<T: Transport> Client<T> {
    pub fn with_transport(cfg: LlmConfig, transport: T) -> Result<Self, LlmError> {
        cfg.validate()?;
        let gate = Gate::new(cfg.max_concurrency);
        Ok(Client { cfg, transport, gate, sleeper: Arc::new(|d| std::thread::sleep(d)) })
    }

    /// Replaces the backoff sleeper; tests pass a recorder so retries do not
    /// actually wait.
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    pub fn complete(&self, prompt: &PromptBundle) -> Result<Completion, LlmError> {
        self.complete_text(&prompt.text)
    }

    pub fn complete_text(&self, content: &str) -> Result<Completion, LlmError> {
        let _permit = self.gate.acquire();
        let request = ChatRequest {
            model: self.cfg.model.clone(),
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_output_tokens,
            messages: vec![ChatMessage { role: "user".to_string(), content: content.to_string() }],
        };
        let started = Instant::now();
        let max_attempts = self.cfg.max_retries.saturating_add(1);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.transport.send(&request) {
                Ok(body) => return interpret_body(&body, started.elapsed(), attempt),
                Err(e) if e.is_transient() && attempt < max_attempts => {
                    (self.sleeper)(backoff_delay(attempt));
                }
                Err(e) => return Err(exhausted(e, attempt)),
            }
        }
    }
}

/// Full jitter over an exponential cap: 1s, 2s, 4s, ... per failed attempt.
fn backoff_delay(attempt: u32) -> Duration {
    let cap = Duration::from_secs(1) * 2u32.saturating_pow((attempt - 1).min(16));
    cap.mul_f64(rand::thread_rng().gen::<f64>())
}

fn exhausted(e: TransportError, attempts: u32) -> LlmError {
    match e {
        TransportError::Auth { status } => LlmError::Auth { status },
        TransportError::RateLimited => LlmError::RateLimited { attempts },
        TransportError::Timeout => LlmError::Timeout { attempts },
        TransportError::Connect(detail) => LlmError::Transport { attempts, detail },
        TransportError::Status { status, body } => LlmError::Endpoint { status, body },
    }
}

fn interpret_body(
    body: &str,
    latency: Duration,
    attempts: u32,
) -> Result<Completion, LlmError> {
    #[derive(Deserialize)]
    struct Resp {
        choices: Vec<Choice>,
        usage: Option<TokenUsage>,
    }
    #[derive(Deserialize)]
    struct Choice {
        message: Msg,
    }
    #[derive(Deserialize)]
    struct Msg {
        content: String,
    }
    let resp: Resp =
        serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::Malformed("response has no choices".to_string()))?;
    Ok(Completion { text: choice.message.content, latency, attempts, token_usage: resp.usage })
}

/// One-shot remote completion with a fresh HTTP client.
pub fn complete(prompt: &PromptBundle, cfg: &LlmConfig) -> Result<Completion, LlmError> {
    Client::new(cfg.clone())?.complete(prompt)
}

/// Offline answerer: parse the prompt's test subgraph, run the default
/// detectors, render the verdict in the answer format. Deterministic, and
/// blind to ground truth by construction (labels are never serialized).
pub fn stub_complete(prompt: &PromptBundle) -> Result<Completion, LlmError> {
    let started = Instant::now();
    let section = test_section(&prompt.text).ok_or(LlmError::NoTestSection)?;
    let sub = parse_serialized(section)?;
    let kinds: BTreeSet<PatternKind> = detect(&sub, &DetectorConfig::default())
        .into_iter()
        .map(|m| m.kind)
        .collect();
    let text = if kinds.is_empty() {
        "Conclusion: Not Suspicious\n\
         Explanation: The transfers show no burst, cycle, or layered structure under rule-based screening. Counterparties and timing look routine.\n\
         Observed Pattern: None\n"
            .to_string()
    } else {
        let names: Vec<&str> = kinds.iter().map(|k| k.display_name()).collect();
        format!(
            "Conclusion: Suspicious\n\
             Explanation: Rule-based screening matched {} structure in the test subgraph. The participants and transfer timing fit that shape.\n\
             Observed Pattern: {}\n",
            names.join(", "),
            names.join(", ")
        )
    };
    Ok(Completion { text, latency: started.elapsed(), attempts: 1, token_usage: None })
}
