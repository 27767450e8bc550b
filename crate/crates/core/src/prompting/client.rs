//! Chat-completion client abstraction and the HTTP provider adapter.
//!
//! Everything upstream talks to [`ChatClient`], so tests and offline runs
//! swap in the transcript-driven [`super::script::ScriptedClient`] while
//! production points at any OpenAI-compatible chat endpoint.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    /// Network-level failure; the only class retried by the labeling ops.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("transcript exhausted at request ordinal {ordinal}")]
    TranscriptExhausted { ordinal: usize },
    #[error("fingerprint mismatch at ordinal {ordinal}: transcript expects {expected}, request hashed to {actual}")]
    FingerprintMismatch {
        ordinal: usize,
        expected: String,
        actual: String,
    },
}

impl ClientError {
    /// Transient failures worth another attempt: connection problems,
    /// rate limits, and server-side errors.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn user(content: impl Into<String>, temperature: f64) -> Self {
        Self {
            messages: vec![ChatMessage {
                role: "user".to_string(),
                content: content.into(),
            }],
            temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
}

/// A synchronous chat-completion backend. Implementations must be safe to
/// share across labeling threads.
pub trait ChatClient: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

/// Stable SHA-256 hex digest of a request, used to pin transcripts to the
/// exact prompts that produced them.
pub fn request_fingerprint(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("temperature={:.6}\n", request.temperature));
    for message in &request.messages {
        hasher.update(message.role.as_bytes());
        hasher.update([0u8]);
        hasher.update(message.content.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Bounded retry with exponential backoff, applied only to
/// [`ClientError::is_retryable`] failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

/// Send a request, retrying transient failures. Returns the response and
/// how many retries it took.
pub fn send_with_retry(
    client: &dyn ChatClient,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> Result<(ChatResponse, u32), ClientError> {
    let mut attempt = 0u32;
    loop {
        match client.send(request) {
            Ok(response) => return Ok((response, attempt)),
            Err(err) if err.is_retryable() && attempt < policy.max_retries => {
                let delay = policy.base_delay * 2u32.saturating_pow(attempt);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

/// Connection settings for an OpenAI-style chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct HttpClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Bearer token; `None` falls back to the `LLM_API_KEY` environment
    /// variable, and requests go out unauthenticated if neither is set.
    pub api_key: Option<String>,
    pub max_in_flight: usize,
    /// Minimum spacing between request starts (crude provider rate limit).
    pub min_interval: Duration,
    pub timeout: Duration,
}

impl HttpClientConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            max_in_flight: 4,
            min_interval: Duration::from_millis(100),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Blocking HTTP adapter with bounded concurrency and request pacing.
pub struct HttpChatClient {
    config: HttpClientConfig,
    http: reqwest::blocking::Client,
    gate: Gate,
    pacer: Mutex<Option<Instant>>,
}

impl HttpChatClient {
    pub fn new(mut config: HttpClientConfig) -> Result<Self, ClientError> {
        if config.api_key.is_none() {
            config.api_key = std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty());
        }
        if config.max_in_flight == 0 {
            config.max_in_flight = 1;
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            gate: Gate::new(config.max_in_flight),
            pacer: Mutex::new(None),
            config,
            http,
        })
    }

    fn pace(&self) {
        let mut last = self.pacer.lock().unwrap();
        let now = Instant::now();
        let slot = match *last {
            Some(prev) => (prev + self.config.min_interval).max(now),
            None => now,
        };
        *last = Some(slot);
        drop(last);
        let wait = slot.saturating_duration_since(now);
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

impl ChatClient for HttpChatClient {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let _permit = self.gate.acquire();
        self.pace();
        let body = build_chat_body(&self.config.model, request);
        let mut call = self.http.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = call
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Http { status, body: text });
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ClientError::BadResponse(format!("not JSON: {e}")))?;
        Ok(ChatResponse {
            text: extract_chat_text(&value)?,
        })
    }
}

/// Request body in the common chat-completions shape.
pub fn build_chat_body(model: &str, request: &ChatRequest) -> serde_json::Value {
    serde_json::json!({
        "model": model,
        "messages": request.messages,
        "temperature": request.temperature,
    })
}

/// Pull the assistant text out of a chat-completions response.
pub fn extract_chat_text(value: &serde_json::Value) -> Result<String, ClientError> {
    value["choices"]
        .get(0)
        .and_then(|choice| choice["message"]["content"].as_str())
        .map(str::to_string)
        .ok_or_else(|| {
            ClientError::BadResponse("no choices[0].message.content in response".to_string())
        })
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut permits = self.0.permits.lock().unwrap();
        *permits += 1;
        self.0.available.notify_one();
    }
}
