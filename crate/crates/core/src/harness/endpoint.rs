use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("environment variable {var} holding the API key is not set")]
    MissingApiKey { var: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("request payload too large (HTTP 413)")]
    PayloadTooLarge,
    #[error("endpoint {endpoint} does not accept image input")]
    ImagesUnsupported { endpoint: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    Protocol(String),
}

/// How the reasoning budget is passed to the server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThinkingStyle {
    /// Nothing is sent; for servers without a reasoning mode.
    Omit,
    /// `chat_template_kwargs.enable_thinking` plus a top-level
    /// `thinking_budget`, as accepted by vLLM-style servers.
    #[default]
    ChatTemplateKwargs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointSpec {
    /// Name used to refer to this endpoint from a run config.
    pub id: String,
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token. Unset for local servers.
    pub api_key_env: Option<String>,
    pub supports_images: bool,
    pub max_output_tokens: u32,
    /// 0 disables reasoning mode.
    pub thinking_budget_tokens: u32,
    pub thinking_style: ThinkingStyle,
    pub temperature: f64,
    pub request_timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles on each retry.
    pub retry_backoff_s: f64,
    pub max_in_flight: usize,
    /// Request starts per minute; `None` is unlimited.
    pub requests_per_minute: Option<u32>,
}

impl Default for EndpointSpec {
    fn default() -> Self {
        EndpointSpec {
            id: "default".into(),
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: String::new(),
            api_key_env: None,
            supports_images: true,
            max_output_tokens: 1024,
            thinking_budget_tokens: 2048,
            thinking_style: ThinkingStyle::default(),
            temperature: 0.0,
            request_timeout_s: 300.0,
            max_retries: 3,
            retry_backoff_s: 1.0,
            max_in_flight: 4,
            requests_per_minute: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One part of a message. `context` marks the parts that carry the
/// (possibly compressed) code context; it is not sent over the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum ContentPart {
    Text { text: String, context: bool },
    Image { png: Arc<Vec<u8>>, context: bool },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text {
            text: text.into(),
            context: false,
        }
    }

    pub fn is_context(&self) -> bool {
        match self {
            ContentPart::Text { context, .. } | ContentPart::Image { context, .. } => *context,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, ContentPart::Image { .. })
    }

    pub fn to_wire(&self) -> Value {
        match self {
            ContentPart::Text { text, .. } => json!({"type": "text", "text": text}),
            ContentPart::Image { png, .. } => {
                let b64 = base64::engine::general_purpose::STANDARD.encode(png.as_slice());
                json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:image/png;base64,{b64}")}
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: Role,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    /// Overrides the endpoint's `max_output_tokens`.
    pub max_tokens: Option<u32>,
    /// Ask for this many alternatives per generated position.
    pub top_logprobs: Option<u32>,
    /// Forces reasoning off regardless of the endpoint budget.
    pub disable_thinking: bool,
}

impl ChatRequest {
    pub fn user(content: Vec<ContentPart>) -> Self {
        ChatRequest {
            messages: vec![Message {
                role: Role::User,
                content,
            }],
            ..Default::default()
        }
    }

    pub fn has_images(&self) -> bool {
        self.messages.iter().flat_map(|m| &m.content).any(ContentPart::is_image)
    }

    pub fn parts(&self) -> impl Iterator<Item = &ContentPart> {
        self.messages.iter().flat_map(|m| &m.content)
    }

    /// The chat-completions JSON body.
    pub fn to_wire(&self, spec: &EndpointSpec) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                json!({
                    "role": m.role,
                    "content": m.content.iter().map(ContentPart::to_wire).collect::<Vec<_>>(),
                })
            })
            .collect();
        let mut body = json!({
            "model": spec.model_name,
            "messages": messages,
            "max_tokens": self.max_tokens.unwrap_or(spec.max_output_tokens),
            "temperature": spec.temperature,
        });
        let obj = body.as_object_mut().expect("object literal");
        if let Some(n) = self.top_logprobs {
            obj.insert("logprobs".into(), json!(true));
            obj.insert("top_logprobs".into(), json!(n));
        }
        let budget = if self.disable_thinking {
            0
        } else {
            spec.thinking_budget_tokens
        };
        if spec.thinking_style == ThinkingStyle::ChatTemplateKwargs {
            obj.insert(
                "chat_template_kwargs".into(),
                json!({"enable_thinking": budget > 0}),
            );
            if budget > 0 {
                obj.insert("thinking_budget".into(), json!(budget));
            }
        }
        body
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
    /// Alternatives at the first generated position, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_logprobs: Vec<TokenLogprob>,
    pub latency_s: f64,
    pub retries: u32,
}

/// Anything that answers chat requests.
pub trait ModelClient: Send + Sync {
    fn spec(&self) -> &EndpointSpec;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, EndpointError>;
}

/// Parses a chat-completions response body.
pub fn parse_response(body: &Value) -> Result<(String, Usage, Vec<TokenLogprob>), EndpointError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| EndpointError::Protocol("no choices in response".into()))?;
    let message = choice
        .get("message")
        .ok_or_else(|| EndpointError::Protocol("choice has no message".into()))?;
    let mut content = match message.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(Value::Array(parts)) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect(),
        Some(other) => return Err(EndpointError::Protocol(format!("unexpected content {other}"))),
    };
    // Servers that split reasoning out still get it stripped downstream.
    if let Some(reasoning) = message.get("reasoning_content").and_then(Value::as_str) {
        if !reasoning.is_empty() {
            content = format!("<think>{reasoning}</think>{content}");
        }
    }
    let usage = body
        .get("usage")
        .map(|u| serde_json::from_value::<Usage>(fill_usage(u)))
        .transpose()
        .map_err(|e| EndpointError::Protocol(format!("usage: {e}")))?
        .unwrap_or_default();
    let top_logprobs = choice
        .pointer("/logprobs/content/0/top_logprobs")
        .and_then(Value::as_array)
        .map(|alts| {
            alts.iter()
                .filter_map(|a| {
                    Some(TokenLogprob {
                        token: a.get("token")?.as_str()?.to_owned(),
                        logprob: a.get("logprob")?.as_f64()?,
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    Ok((content, usage, top_logprobs))
}

fn fill_usage(u: &Value) -> Value {
    let get = |k: &str| u.get(k).and_then(Value::as_u64).unwrap_or(0);
    let (p, c) = (get("prompt_tokens"), get("completion_tokens"));
    let t = u.get("total_tokens").and_then(Value::as_u64).unwrap_or(p + c);
    json!({"prompt_tokens": p, "completion_tokens": c, "total_tokens": t})
}

/// Bounds concurrent requests and spaces request starts.
#[derive(Debug)]
struct Throttle {
    max_in_flight: usize,
    min_interval: Option<Duration>,
    state: Mutex<ThrottleState>,
    freed: Condvar,
}

#[derive(Debug, Default)]
struct ThrottleState {
    in_flight: usize,
    next_start: Option<Instant>,
}

struct Permit<'a>(&'a Throttle);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().unwrap_or_else(|e| e.into_inner());
        st.in_flight -= 1;
        self.0.freed.notify_one();
    }
}

impl Throttle {
    fn new(max_in_flight: usize, requests_per_minute: Option<u32>) -> Self {
        Throttle {
            max_in_flight: max_in_flight.max(1),
            min_interval: requests_per_minute
                .filter(|&r| r > 0)
                .map(|r| Duration::from_secs_f64(60.0 / f64::from(r))),
            state: Mutex::new(ThrottleState::default()),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while st.in_flight >= self.max_in_flight {
            st = self.freed.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.in_flight += 1;
        let wait = match self.min_interval {
            Some(gap) => {
                let now = Instant::now();
                let start = st.next_start.map_or(now, |t| t.max(now));
                st.next_start = Some(start + gap);
                start - now
            }
            None => Duration::ZERO,
        };
        drop(st);
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        Permit(self)
    }
}

/// Blocking chat-completions client.
pub struct HttpClient {
    spec: EndpointSpec,
    agent: ureq::Agent,
    throttle: Throttle,
}

enum Attempt {
    Done(ChatResponse),
    Transient(String),
}

impl HttpClient {
    pub fn new(spec: EndpointSpec) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(spec.request_timeout_s.max(0.001))))
            .build()
            .into();
        let throttle = Throttle::new(spec.max_in_flight, spec.requests_per_minute);
        HttpClient {
            spec,
            agent,
            throttle,
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.spec.base_url.trim_end_matches('/'))
    }

    fn api_key(&self) -> Result<Option<String>, EndpointError> {
        match &self.spec.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| EndpointError::MissingApiKey { var: var.clone() }),
        }
    }

    fn attempt(&self, body: &Value, key: Option<&str>) -> Result<Attempt, EndpointError> {
        let _permit = self.throttle.acquire();
        let started = Instant::now();
        let mut req = self.agent.post(self.url()).header("Content-Type", "application/json");
        if let Some(key) = key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().with_config().limit(64 << 20).read_to_string() {
            Ok(t) => t,
            Err(e) => return Ok(Attempt::Transient(format!("reading body: {e}"))),
        };
        match status {
            200..=299 => {}
            401 | 403 => return Err(EndpointError::Auth { status }),
            413 => return Err(EndpointError::PayloadTooLarge),
            408 | 429 | 500..=599 => {
                return Ok(Attempt::Transient(format!("HTTP {status}: {}", truncate(&text))))
            }
            _ => {
                return Err(EndpointError::Http {
                    status,
                    body: truncate(&text),
                })
            }
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| EndpointError::Protocol(format!("body is not JSON: {e}")))?;
        let (content, usage, top_logprobs) = parse_response(&value)?;
        Ok(Attempt::Done(ChatResponse {
            content,
            usage,
            top_logprobs,
            latency_s: started.elapsed().as_secs_f64(),
            retries: 0,
        }))
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 300;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_owned(),
    }
}

impl ModelClient for HttpClient {
    fn spec(&self) -> &EndpointSpec {
        &self.spec
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        if request.has_images() && !self.spec.supports_images {
            return Err(EndpointError::ImagesUnsupported {
                endpoint: self.spec.id.clone(),
            });
        }
        let key = self.api_key()?;
        let body = request.to_wire(&self.spec);
        let attempts = self.spec.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.spec.retry_backoff_s * 2f64.powi(attempt as i32 - 1);
                log::warn!(
                    "{}: retry {attempt}/{} in {delay:.2}s after: {last}",
                    self.spec.id,
                    self.spec.max_retries
                );
                std::thread::sleep(Duration::from_secs_f64(delay.max(0.0)));
            }
            match self.attempt(&body, key.as_deref())? {
                Attempt::Done(mut resp) => {
                    resp.retries = attempt;
                    if attempt > 0 {
                        log::info!("{}: succeeded after {attempt} retries", self.spec.id);
                    }
                    return Ok(resp);
                }
                Attempt::Transient(msg) => last = msg,
            }
        }
        Err(EndpointError::RetriesExhausted { attempts, last })
    }
}
