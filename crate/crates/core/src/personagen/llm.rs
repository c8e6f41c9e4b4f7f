//! Chat-completion client abstraction with a scripted replay mock and an
//! HTTP client for hosted models.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Renders a message sequence as plain text, one `[role]` block per message.
pub fn render_messages(messages: &[Message]) -> String {
    messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            format!("[{role}]\n{}", m.content)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// SHA-256 over roles and contents; the replay key of the scripted client.
pub fn messages_hash(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(format!("{:?}", m.role).as_bytes());
        h.update([0]);
        h.update(m.content.as_bytes());
        h.update([0xff]);
    }
    hex::encode(h.finalize())
}

pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Decoding parameters. `None` means the provider default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl CompletionParams {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Error, Clone)]
pub enum LlmError {
    #[error("model service unavailable: {message}")]
    Unavailable {
        message: String,
        retry_after: Option<Duration>,
    },
    #[error("unexpected model response: {0}")]
    BadResponse(String),
    #[error("no scripted response for message hash {0}")]
    Unscripted(String),
    #[error("invalid client config: {0}")]
    Config(String),
    #[error("{0}")]
    Scripted(String),
}

pub trait LlmClient: Send + Sync {
    fn model_id(&self) -> String;

    fn complete(&self, messages: &[Message], params: &CompletionParams)
        -> Result<Completion, LlmError>;
}

impl<C: LlmClient + ?Sized> LlmClient for Arc<C> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn complete(&self, messages: &[Message], params: &CompletionParams) -> Result<Completion, LlmError> {
        (**self).complete(messages, params)
    }
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn complete(&self, messages: &[Message], params: &CompletionParams) -> Result<Completion, LlmError> {
        (**self).complete(messages, params)
    }
}

pub type Responder = Arc<dyn Fn(&[Message]) -> Result<String, LlmError> + Send + Sync>;

/// Replays canned responses keyed by [`messages_hash`]; unscripted message
/// sequences go to the fallback responder, or fail when there is none.
///
/// Token counts are whitespace-token counts of the prompt and the response.
#[derive(Clone)]
pub struct ScriptedClient {
    model_id: String,
    script: HashMap<String, String>,
    fallback: Option<Responder>,
    calls: Arc<AtomicUsize>,
}

impl fmt::Debug for ScriptedClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScriptedClient")
            .field("model_id", &self.model_id)
            .field("scripted", &self.script.len())
            .field("has_fallback", &self.fallback.is_some())
            .finish()
    }
}

#[derive(Deserialize)]
struct ScriptLine {
    messages_hash: String,
    response: String,
}

impl Default for ScriptedClient {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedClient {
    pub fn new() -> Self {
        Self {
            model_id: "scripted-mock".into(),
            script: HashMap::new(),
            fallback: None,
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn with_fallback<R>(mut self, responder: R) -> Self
    where
        R: Fn(&[Message]) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        self.fallback = Some(Arc::new(responder));
        self
    }

    pub fn with_response(mut self, messages: &[Message], response: impl Into<String>) -> Self {
        self.script.insert(messages_hash(messages), response.into());
        self
    }

    /// Loads `{"messages_hash": ..., "response": ...}` JSON lines.
    pub fn load_script(mut self, path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptLine = serde_json::from_str(line)
                .map_err(|e| LlmError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            self.script.insert(entry.messages_hash, entry.response);
        }
        Ok(self)
    }

    /// Number of `complete` calls so far, shared between clones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Mock that writes a persona from the success story in the prompt.
    pub fn persona_synthesizer() -> Self {
        Self::new().with_fallback(|m| Ok(super::synth::synthesize_persona_reply(m)))
    }

    /// Mock that answers by listing the titles of the context documents it
    /// was given, or declines when there are none.
    pub fn context_echo() -> Self {
        Self::new().with_fallback(|m| Ok(super::synth::echo_context_reply(m)))
    }

    /// Offline stand-in for a real model: persona prompts (those carrying a
    /// success story) get [`Self::persona_synthesizer`] replies, everything
    /// else gets [`Self::context_echo`] replies.
    pub fn offline() -> Self {
        Self::new().with_fallback(|m| {
            if m.iter().any(|x| x.content.contains(super::prompt::STORY_MARKER)) {
                Ok(super::synth::synthesize_persona_reply(m))
            } else {
                Ok(super::synth::echo_context_reply(m))
            }
        })
    }
}

impl LlmClient for ScriptedClient {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn complete(&self, messages: &[Message], _params: &CompletionParams) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = messages_hash(messages);
        let text = match (self.script.get(&key), &self.fallback) {
            (Some(text), _) => text.clone(),
            (None, Some(f)) => f(messages)?,
            (None, None) => return Err(LlmError::Unscripted(key)),
        };
        let prompt_tokens = messages.iter().map(|m| whitespace_tokens(&m.content)).sum();
        Ok(Completion {
            completion_tokens: whitespace_tokens(&text),
            prompt_tokens,
            text,
        })
    }
}

/// Client for an OpenAI-compatible chat-completions endpoint.
pub struct RemoteLlmClient {
    endpoint: String,
    api_key: Option<String>,
    model_id: String,
    http: reqwest::blocking::Client,
}

impl fmt::Debug for RemoteLlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteLlmClient")
            .field("endpoint", &self.endpoint)
            .field("model_id", &self.model_id)
            .finish_non_exhaustive()
    }
}

pub const DEFAULT_LLM_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_LLM_MODEL: &str = "gpt-4o-mini";

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl RemoteLlmClient {
    pub fn new(endpoint: String, api_key: Option<String>, model_id: String) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { endpoint, api_key, model_id, http })
    }

    /// Settings from `LLM_MODEL`, `LLM_API_KEY` and `LLM_ENDPOINT`.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::new(
            std::env::var("LLM_ENDPOINT").unwrap_or_else(|_| DEFAULT_LLM_ENDPOINT.into()),
            std::env::var("LLM_API_KEY").ok(),
            std::env::var("LLM_MODEL").unwrap_or_else(|_| DEFAULT_LLM_MODEL.into()),
        )
    }
}

impl LlmClient for RemoteLlmClient {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn complete(&self, messages: &[Message], params: &CompletionParams) -> Result<Completion, LlmError> {
        let mut body = serde_json::json!({ "model": self.model_id, "messages": messages });
        if let Some(t) = params.temperature {
            body["temperature"] = t.into();
        }
        if let Some(m) = params.max_tokens {
            body["max_tokens"] = m.into();
        }
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Unavailable {
            message: e.to_string(),
            retry_after: None,
        })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse().ok())
                .map(Duration::from_secs);
            return Err(LlmError::Unavailable {
                message: format!("HTTP {status}"),
                retry_after,
            });
        }
        if !status.is_success() {
            return Err(LlmError::BadResponse(format!("HTTP {status}")));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| LlmError::BadResponse(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::BadResponse("no choices".into()))?;
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (
                messages.iter().map(|m| whitespace_tokens(&m.content)).sum(),
                whitespace_tokens(&text),
            ),
        };
        Ok(Completion { text, prompt_tokens, completion_tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn scripted_replay_and_counts() {
        let msgs = vec![Message::system("be brief"), Message::user("hello there")];
        let client = ScriptedClient::new().with_response(&msgs, "general kenobi");
        let c = client.complete(&msgs, &CompletionParams::default()).unwrap();
        assert_eq!(c.text, "general kenobi");
        assert_eq!((c.prompt_tokens, c.completion_tokens), (4, 2));
        assert!(matches!(
            client.complete(&[Message::user("other")], &CompletionParams::default()),
            Err(LlmError::Unscripted(_))
        ));
        assert_eq!(client.calls(), 2);
    }

    #[test]
    fn hash_depends_on_role() {
        assert_ne!(
            messages_hash(&[Message::user("x")]),
            messages_hash(&[Message::system("x")])
        );
    }

    #[test]
    fn script_file() {
        let dir = tempfile::tempdir().unwrap();
        let msgs = vec![Message::user("q")];
        let path = dir.path().join("script.jsonl");
        std::fs::write(
            &path,
            format!("{{\"messages_hash\":\"{}\",\"response\":\"a\"}}\n", messages_hash(&msgs)),
        )
        .unwrap();
        let client = ScriptedClient::new().load_script(&path).unwrap();
        assert_eq!(client.complete(&msgs, &CompletionParams::default()).unwrap().text, "a");
    }

    #[test]
    fn remote_parses_usage() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let request = String::from_utf8(body).unwrap();
            let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":7,"completion_tokens":1}}"#;
            let reply = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            request
        });
        let client = RemoteLlmClient::new(format!("http://{addr}/v1/chat"), Some("k".into()), "m".into()).unwrap();
        let c = client.complete(&[Message::user("hey")], &CompletionParams::default()).unwrap();
        server.join().unwrap();
        assert_eq!(c, Completion { text: "hi".into(), prompt_tokens: 7, completion_tokens: 1 });
    }
}
