use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{CorrectionRequest, CorrectionResponse};

pub const API_KEY_ENV: &str = "BIASFORGE_API_KEY";

/// Wraps the hypothesis in the user message. Everything after this prefix is
/// the first-pass transcript.
pub const USER_INSTRUCTION: &str = "Correct the following multi-talker transcript. \
Keep every <sc> speaker-change marker. Output only the corrected transcript.\n\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub max_concurrency: usize,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_id: "default".into(),
            timeout_s: 60.0,
            max_retries: 3,
            max_concurrency: 4,
            backoff_ms: 500,
            api_key: None,
        }
    }
}

impl EndpointConfig {
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request rejected: {0}")]
    InvalidRequest(String),
    #[error("authentication failed (HTTP {0})")]
    Auth(u16),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

impl GatewayError {
    fn is_transient(&self) -> bool {
        match self {
            GatewayError::Timeout(_) | GatewayError::Transport(_) => true,
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

fn request_body(request: &CorrectionRequest) -> serde_json::Value {
    let mut body = json!({
        "model": request.model_id,
        "messages": [
            {"role": "system", "content": request.system.text},
            {"role": "user", "content": format!("{USER_INSTRUCTION}{}", request.user_text)},
        ],
        "temperature": request.decode.temperature,
    });
    if let Some(max) = request.decode.max_output_tokens {
        body["max_tokens"] = json!(max);
    }
    body
}

fn agent(config: &EndpointConfig) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn attempt(
    agent: &ureq::Agent,
    config: &EndpointConfig,
    body: &serde_json::Value,
) -> Result<String, GatewayError> {
    let timeout = Duration::from_secs_f64(config.timeout_s);
    let mut req = agent.post(&config.endpoint_url);
    if let Some(key) = &config.api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(|e| classify(e, timeout))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| classify(e, timeout))?;
    match status {
        200..=299 => {}
        401 | 403 => return Err(GatewayError::Auth(status)),
        _ => return Err(GatewayError::Http { status, body: text }),
    }
    let parsed: ChatResponse =
        serde_json::from_str(&text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| GatewayError::MalformedResponse("no message content in first choice".into()))
}

fn classify(err: ureq::Error, timeout: Duration) -> GatewayError {
    match err {
        ureq::Error::Timeout(_) => GatewayError::Timeout(timeout),
        ureq::Error::Io(e)
            if matches!(
                e.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            ) =>
        {
            GatewayError::Timeout(timeout)
        }
        other => GatewayError::Transport(other.to_string()),
    }
}

/// One chat-completion call, retried with exponential backoff on transient
/// failures (timeouts, transport errors, 429 and 5xx).
pub fn correct_remote(
    request: &CorrectionRequest,
    config: &EndpointConfig,
) -> Result<CorrectionResponse, GatewayError> {
    correct_with_agent(&agent(config), request, config)
}

fn correct_with_agent(
    agent: &ureq::Agent,
    request: &CorrectionRequest,
    config: &EndpointConfig,
) -> Result<CorrectionResponse, GatewayError> {
    if request.user_text.trim().is_empty() {
        return Err(GatewayError::InvalidRequest("empty hypothesis".into()));
    }
    if !(request.decode.temperature >= 0.0) {
        return Err(GatewayError::InvalidRequest(
            "temperature must be >= 0".into(),
        ));
    }
    let body = request_body(request);
    let started = Instant::now();
    let mut tries = 0u32;
    loop {
        tries += 1;
        match attempt(agent, config, &body) {
            Ok(text) => {
                return Ok(CorrectionResponse {
                    corrected_text: text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    raw_status: format!("ok after {tries} attempt(s)"),
                })
            }
            Err(e) if e.is_transient() && tries <= config.max_retries => {
                let delay = config.backoff_ms.saturating_mul(1 << (tries - 1).min(16));
                log::warn!("attempt {tries} failed ({e}); retrying in {delay} ms");
                std::thread::sleep(Duration::from_millis(delay));
            }
            Err(e) => return Err(e),
        }
    }
}

/// Runs requests with at most `max_concurrency` in flight. Results come back
/// in input order.
pub fn correct_batch(
    requests: &[CorrectionRequest],
    config: &EndpointConfig,
) -> Vec<Result<CorrectionResponse, GatewayError>> {
    let agent = agent(config);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<CorrectionResponse, GatewayError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    let workers = config.max_concurrency.max(1).min(requests.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let result = correct_with_agent(&agent, &requests[i], config);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect()
}
