//! Clients and parsers for the planner, judge and grounder roles.
//!
//! All three roles speak the same minimal chat protocol: a list of
//! messages in, a list of text choices out. [`HttpEndpoint`] talks to a
//! remote server; the [`stubs`] module serves the same trait offline.

pub mod coords;
pub mod dsl;
mod fanout;
mod grounder;
pub mod prompts;
pub mod stubs;
mod verdict;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coords::{parse_point, parse_point_within, CoordError};
pub use dsl::{parse_action, DslError, GroundingTarget, ParsedAction};
pub use fanout::{request_proposals, ActionProposal, FanoutConfig, SlotFailure};
pub use grounder::{CountingGrounder, Grounder, GroundingError, PolicyGrounder, RemoteGrounder, ScreenContext};
pub use verdict::{judge_select, parse_verdict, JudgeOutcome, JudgeVerdict, VerdictError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    Text,
    Screen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentPart {
    #[serde(rename = "type")]
    pub kind: PartKind,
    pub value: String,
}

impl ContentPart {
    pub fn text(value: impl Into<String>) -> Self {
        Self { kind: PartKind::Text, value: value.into() }
    }
    pub fn screen(value: impl Into<String>) -> Self {
        Self { kind: PartKind::Screen, value: value.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: "system".into(), content: vec![ContentPart::text(text)] }
    }
    pub fn user(content: Vec<ContentPart>) -> Self {
        Self { role: "user".into(), content }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub n: usize,
}

impl ChatRequest {
    /// First screen part across all messages.
    pub fn screen(&self) -> Option<&str> {
        self.parts().find(|p| p.kind == PartKind::Screen).map(|p| p.value.as_str())
    }

    pub fn parts(&self) -> impl Iterator<Item = &ContentPart> {
        self.messages.iter().flat_map(|m| m.content.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Planner,
    Judge,
    Grounder,
}

/// Where a request sits in an episode. Remote endpoints ignore it;
/// scripted stubs derive their randomness from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestMeta {
    pub role: Role,
    pub step: usize,
    pub slot: usize,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndpointError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Other(String),
}

/// A chat-completion server. Implementations must tolerate concurrent
/// calls from many threads.
pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, request: &ChatRequest, meta: &RequestMeta) -> Result<ChatResponse, EndpointError>;
}

/// Returns the single choice of an `n = 1` request.
pub fn complete_one(
    endpoint: &dyn ChatEndpoint,
    request: &ChatRequest,
    meta: &RequestMeta,
) -> Result<String, EndpointError> {
    let mut response = endpoint.complete(request, meta)?;
    if response.choices.len() != request.n {
        return Err(EndpointError::Malformed(format!(
            "requested {} choices, got {}",
            request.n,
            response.choices.len()
        )));
    }
    Ok(response.choices.swap_remove(0).text)
}

/// Environment variables read by [`HttpEndpoint::from_env`].
pub const URL_VAR: &str = "AGENTLOOP_ENDPOINT_URL";
pub const TOKEN_VAR: &str = "AGENTLOOP_ENDPOINT_TOKEN";

/// JSON-over-HTTP endpoint: POSTs the request body, expects
/// `{"choices":[{"text":...}]}` back, with an optional bearer token.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, EndpointError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EndpointError::Transport(e.to_string()))?;
        Ok(Self { client, url: url.into(), token })
    }

    /// `url` overrides the URL variable; the token always comes from the
    /// token variable when set.
    pub fn from_env(url: Option<&str>, timeout: Duration) -> Result<Self, EndpointError> {
        let url = match url {
            Some(u) => u.to_string(),
            None => std::env::var(URL_VAR)
                .map_err(|_| EndpointError::Other(format!("no endpoint URL given and {URL_VAR} is unset")))?,
        };
        Self::new(url, std::env::var(TOKEN_VAR).ok(), timeout)
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl ChatEndpoint for HttpEndpoint {
    fn complete(&self, request: &ChatRequest, _meta: &RequestMeta) -> Result<ChatResponse, EndpointError> {
        let mut call = self.client.post(&self.url).json(request);
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let response = call.send().map_err(|e| {
            if e.is_timeout() {
                EndpointError::Timeout
            } else {
                EndpointError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(EndpointError::Status { status: status.as_u16(), body });
        }
        response.json::<ChatResponse>().map_err(|e| EndpointError::Malformed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    #[test]
    fn wire_format() {
        let req = ChatRequest {
            messages: vec![ChatMessage::user(vec![ContentPart::text("hi"), ContentPart::screen("{}")])],
            temperature: 1.0,
            n: 1,
        };
        let json = serde_json::to_string(&req).unwrap();
        assert_eq!(
            json,
            r#"{"messages":[{"role":"user","content":[{"type":"text","value":"hi"},{"type":"screen","value":"{}"}]}],"temperature":1.0,"n":1}"#
        );
        assert_eq!(req.screen(), Some("{}"));
    }

    /// One-shot HTTP server returning `body` and forwarding the raw request.
    fn serve_once(status: &'static str, body: &'static str) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0u8; len];
            reader.read_exact(&mut payload).unwrap();
            head.push_str(&String::from_utf8(payload).unwrap());
            tx.send(head).unwrap();
            write!(stream, "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}", body.len()).unwrap();
        });
        (format!("http://{addr}/v1/chat"), rx)
    }

    fn meta() -> RequestMeta {
        RequestMeta { role: Role::Planner, step: 0, slot: 0, attempt: 0 }
    }

    #[test]
    fn http_round_trip_with_bearer() {
        let (url, seen) = serve_once("200 OK", r#"{"choices":[{"text":"agent.done()"}]}"#);
        let ep = HttpEndpoint::new(url, Some("sekret".into()), Duration::from_secs(5)).unwrap();
        let req = ChatRequest { messages: vec![ChatMessage::system("be brief")], temperature: 0.5, n: 1 };
        assert_eq!(complete_one(&ep, &req, &meta()).unwrap(), "agent.done()");
        let raw = seen.recv().unwrap();
        assert!(raw.starts_with("POST /v1/chat"));
        assert!(raw.to_ascii_lowercase().contains("authorization: bearer sekret"));
        assert!(raw.ends_with(r#""temperature":0.5,"n":1}"#));
    }

    #[test]
    fn http_error_status() {
        let (url, _seen) = serve_once("503 Service Unavailable", r#"{"error":"busy"}"#);
        let ep = HttpEndpoint::new(url, None, Duration::from_secs(5)).unwrap();
        let req = ChatRequest { messages: vec![ChatMessage::system("x")], temperature: 1.0, n: 1 };
        assert!(matches!(ep.complete(&req, &meta()), Err(EndpointError::Status { status: 503, .. })));
    }

    #[test]
    fn choice_count_checked() {
        let (url, _seen) = serve_once("200 OK", r#"{"choices":[]}"#);
        let ep = HttpEndpoint::new(url, None, Duration::from_secs(5)).unwrap();
        let req = ChatRequest { messages: vec![ChatMessage::system("x")], temperature: 1.0, n: 1 };
        assert!(matches!(complete_one(&ep, &req, &meta()), Err(EndpointError::Malformed(_))));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let ep = HttpEndpoint::new(format!("http://127.0.0.1:{port}/"), None, Duration::from_secs(2)).unwrap();
        let req = ChatRequest { messages: vec![ChatMessage::system("x")], temperature: 1.0, n: 1 };
        assert!(matches!(ep.complete(&req, &meta()), Err(EndpointError::Transport(_) | EndpointError::Timeout)));
    }
}
