//! Shared helpers: an in-process chat-completions server and fixtures.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use codepage::harness::{EndpointSpec, ThinkingStyle};

#[derive(Debug, Clone)]
pub struct MockRequest {
    /// 0-based arrival order.
    pub index: usize,
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

impl MockRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// All text parts of all messages, joined.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for m in self.body["messages"].as_array().into_iter().flatten() {
            match &m["content"] {
                Value::String(s) => out.push_str(s),
                Value::Array(parts) => {
                    for p in parts {
                        if let Some(t) = p["text"].as_str() {
                            out.push_str(t);
                            out.push('\n');
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn image_count(&self) -> usize {
        self.body["messages"]
            .as_array()
            .into_iter()
            .flatten()
            .flat_map(|m| m["content"].as_array().into_iter().flatten())
            .filter(|p| p["type"] == "image_url")
            .count()
    }
}

pub struct MockResponse {
    pub status: u16,
    pub body: String,
}

impl MockResponse {
    pub fn ok(body: Value) -> Self {
        MockResponse {
            status: 200,
            body: body.to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        MockResponse {
            status,
            body: json!({"error": {"message": "mock"}}).to_string(),
        }
    }
}

/// A chat-completions body with a single choice.
pub fn chat(content: &str, total_tokens: u64) -> Value {
    json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": total_tokens.saturating_sub(1), "completion_tokens": 1.min(total_tokens), "total_tokens": total_tokens}
    })
}

type Handler = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

/// Serves HTTP/1.1 with keep-alive on a loopback port until the process ends.
pub struct MockServer {
    pub port: u16,
    pub requests: Arc<Mutex<Vec<MockRequest>>>,
    counter: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&MockRequest) -> MockResponse + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let port = listener.local_addr().unwrap().port();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let counter = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let requests = Arc::clone(&requests);
            let counter = Arc::clone(&counter);
            std::thread::spawn(move || {
                for stream in listener.incoming().flatten() {
                    let (requests, counter, handler) =
                        (Arc::clone(&requests), Arc::clone(&counter), Arc::clone(&handler));
                    std::thread::spawn(move || serve(stream, &requests, &counter, handler.as_ref()));
                }
            });
        }
        MockServer {
            port,
            requests,
            counter,
        }
    }

    pub fn base_url(&self) -> String {
        format!("http://127.0.0.1:{}/v1", self.port)
    }

    pub fn spec(&self, id: &str) -> EndpointSpec {
        EndpointSpec {
            id: id.into(),
            base_url: self.base_url(),
            model_name: format!("mock-{id}"),
            thinking_style: ThinkingStyle::Omit,
            request_timeout_s: 10.0,
            max_retries: 3,
            retry_backoff_s: 0.01,
            max_in_flight: 8,
            ..Default::default()
        }
    }

    pub fn request_count(&self) -> usize {
        self.counter.load(Ordering::SeqCst)
    }

    pub fn recorded(&self) -> Vec<MockRequest> {
        let mut v = self.requests.lock().unwrap().clone();
        v.sort_by_key(|r| r.index);
        v
    }
}

fn serve(stream: TcpStream, requests: &Mutex<Vec<MockRequest>>, counter: &AtomicUsize, handler: &Handler) {
    let mut writer = stream.try_clone().expect("clone stream");
    let mut reader = BufReader::new(stream);
    loop {
        let mut request_line = String::new();
        match reader.read_line(&mut request_line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        let mut headers = Vec::new();
        let mut content_length = 0usize;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                let (k, v) = (k.trim().to_owned(), v.trim().to_owned());
                if k.eq_ignore_ascii_case("content-length") {
                    content_length = v.parse().unwrap_or(0);
                }
                headers.push((k, v));
            }
        }
        let mut body = vec![0; content_length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let index = counter.fetch_add(1, Ordering::SeqCst);
        let req = MockRequest {
            index,
            headers,
            body: serde_json::from_slice(&body).unwrap_or(Value::Null),
        };
        let resp = handler(&req);
        requests.lock().unwrap().push(req);
        let reply = format!(
            "HTTP/1.1 {} MOCK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: keep-alive\r\n\r\n{}",
            resp.status,
            resp.body.len(),
            resp.body
        );
        if writer.write_all(reply.as_bytes()).is_err() {
            return;
        }
    }
}

// ---- benchmark fixtures ----

use codepage::context::{BenchmarkInstance, McqOption, TaskKind};

#[derive(Debug, Clone)]
pub enum Reply {
    Text(String),
    Status(u16),
}

pub const MODEL_TOKENS: u64 = 10;
pub const REFEREE_TOKENS: u64 = 3;

/// Text between `start` and the next `end`.
fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let from = text.find(start).map_or(text.len(), |i| i + start.len());
    let rest = &text[from..];
    &rest[..rest.find(end).unwrap_or(rest.len())]
}

/// Referee rule: the generated summary carries a `[pick:...]` tag.
/// `gen` prefers it, `ref` prefers the other one, `first` always answers A,
/// `none` gives an unreadable reply.
fn judge(text: &str) -> String {
    let first = between(text, "Summary A:\n", "\n\nSummary B:");
    let second = between(text, "Summary B:\n", "\n\nWhich summary");
    let (tagged, gen_letter, ref_letter) = if first.contains("[pick:") {
        (first, "A", "B")
    } else {
        (second, "B", "A")
    };
    let tag = between(tagged, "[pick:", "]");
    match tag {
        "gen" => gen_letter.into(),
        "ref" => ref_letter.into(),
        "first" => "A".into(),
        _ => "Both are fine, hard to say.".into(),
    }
}

/// A chat endpoint that answers task prompts by the first script marker found
/// in the task text and judges referee prompts by tag. Unknown prompts get "?".
pub fn scripted_server(script: Vec<(String, Reply)>) -> MockServer {
    MockServer::start(move |r| {
        let parts = r.body["messages"][0]["content"].as_array().cloned().unwrap_or_default();
        let task_text = parts.first().and_then(|p| p["text"].as_str()).unwrap_or("");
        if task_text.contains("Which summary is better?") {
            return MockResponse::ok(chat(&judge(task_text), REFEREE_TOKENS));
        }
        match script.iter().find(|(m, _)| task_text.contains(m.as_str())) {
            Some((_, Reply::Text(t))) => MockResponse::ok(chat(t, MODEL_TOKENS)),
            Some((_, Reply::Status(s))) => MockResponse::status(*s),
            None => MockResponse::ok(chat("?", MODEL_TOKENS)),
        }
    })
}

pub fn marker(id: &str) -> String {
    format!("[#{id}]")
}

/// Python-looking text of exactly `bytes` bytes whose first line names `id`.
/// Lines are at most 65 bytes.
pub fn sized_context(id: &str, bytes: usize) -> String {
    let mut s = format!("# context {id}\n");
    let mut i = 0;
    while s.len() + 65 <= bytes {
        s.push_str(&format!("v{:04} = {:056}\n", i % 10_000, i));
        i += 1;
    }
    let pad = bytes - s.len();
    if pad > 0 {
        s.push_str(&"#".repeat(pad - 1));
        s.push('\n');
    }
    assert_eq!(s.len(), bytes);
    s
}

/// Context of exactly `tokens` tokens under the default byte estimator
/// (`tokens` even, so the byte count is exact).
pub fn context_tokens(id: &str, tokens: usize) -> String {
    assert!(tokens.is_multiple_of(2));
    sized_context(id, tokens * 7 / 2)
}

pub fn qa(id: &str, tokens: usize, gold: &str) -> BenchmarkInstance {
    let context = context_tokens(id, tokens);
    BenchmarkInstance {
        id: id.into(),
        task: TaskKind::CodeQa,
        instruction: format!("{} Which value is assigned first?", marker(id)),
        reference: None,
        options: Some(
            ["A", "B", "C", "D"]
                .iter()
                .zip(["zero", "one", "two", "three"])
                .map(|(l, t)| McqOption {
                    label: (*l).into(),
                    text: t.into(),
                })
                .collect(),
        ),
        gold_label: Some(gold.into()),
        context_token_count: tokens,
        context,
    }
}

pub fn summarization(id: &str, tokens: usize) -> BenchmarkInstance {
    BenchmarkInstance {
        id: id.into(),
        task: TaskKind::Summarization,
        context: context_tokens(id, tokens),
        instruction: format!("{} Describe the module.", marker(id)),
        reference: Some("Assigns a table of numbered constants.".into()),
        options: None,
        gold_label: None,
        context_token_count: tokens,
    }
}

pub fn completion(id: &str, tokens: usize, reference: &str) -> BenchmarkInstance {
    BenchmarkInstance {
        id: id.into(),
        task: TaskKind::FileCompletion,
        context: context_tokens(id, tokens),
        instruction: format!("{} Continue the file.", marker(id)),
        reference: Some(reference.into()),
        options: None,
        gold_label: None,
        context_token_count: tokens,
    }
}
