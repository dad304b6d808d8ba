//! Clients for the external models: planning agent, action completer,
//! visual embedder and segment annotator.
//!
//! Remote models are reached over OpenAI-compatible `chat/completions` and
//! `embeddings` endpoints. Every role can instead be backed by a scripted
//! mock (`provider = "mock:<script-file>"`) for deterministic runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::prompt::PromptBundle;
use crate::skill::{parse_skill, SkillSequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("environment variable {0} holding the auth token is not set")]
    AuthMissing(String),
    #[error("prompt of {len} characters exceeds the provider limit of {limit}")]
    ContextOverflow { len: usize, limit: usize },
    #[error("embedding dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding is the zero vector")]
    ZeroVector,
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    250
}

/// One provider role's settings. `provider` is `"openai"`, `"mock:<file>"`
/// or, for the embedder only, `"precomputed"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider: String,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_context_chars: Option<usize>,
}

impl ProviderConfig {
    pub fn mock(script: impl AsRef<Path>) -> Self {
        Self { provider: format!("mock:{}", script.as_ref().display()), ..Self::openai("", "") }
    }

    pub fn openai(endpoint_url: &str, model_name: &str) -> Self {
        Self {
            provider: "openai".into(),
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            auth_token_env: None,
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            temperature: 0.0,
            retry_backoff_ms: default_backoff(),
            max_context_chars: None,
        }
    }

    pub fn precomputed() -> Self {
        Self { provider: "precomputed".into(), ..Self::openai("", "") }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err(ProviderError::Config(format!("timeout_s must be positive, got {}", self.timeout_s)));
        }
        match self.backend()? {
            Backend::OpenAi if self.endpoint_url.is_empty() => {
                Err(ProviderError::Config("openai provider needs endpoint_url".into()))
            }
            _ => Ok(()),
        }
    }

    fn backend(&self) -> Result<Backend, ProviderError> {
        match self.provider.as_str() {
            "openai" => Ok(Backend::OpenAi),
            "precomputed" => Ok(Backend::Precomputed),
            other => match other.strip_prefix("mock:") {
                Some(path) if !path.is_empty() => Ok(Backend::Mock(PathBuf::from(path))),
                _ => Err(ProviderError::Config(format!("unknown provider {other:?}"))),
            },
        }
    }

    /// Resolves a relative mock script path against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(path) = self.provider.strip_prefix("mock:") {
            let p = Path::new(path);
            if p.is_relative() {
                self.provider = format!("mock:{}", base.join(p).display());
            }
        }
    }
}

enum Backend {
    OpenAi,
    Precomputed,
    Mock(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: String,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self::text("system", text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::text("user", text)
    }

    fn text(role: &str, text: impl Into<String>) -> Self {
        Self { role: role.into(), parts: vec![ContentPart::Text { text: text.into() }] }
    }

    pub fn text_content(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageUrl { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn char_len(&self) -> usize {
        self.parts
            .iter()
            .map(|p| match p {
                ContentPart::Text { text } => text.chars().count(),
                ContentPart::ImageUrl { .. } => 0,
            })
            .sum()
    }

    /// Wire form: plain string content when the message is text-only.
    pub fn to_wire(&self) -> Value {
        match self.parts.as_slice() {
            [ContentPart::Text { text }] => json!({"role": self.role, "content": text}),
            parts => json!({"role": self.role, "content": parts}),
        }
    }
}

/// `data:<mime>;base64,<payload>` for an image file.
pub fn image_data_uri(path: &Path) -> Result<String, ProviderError> {
    let bytes = fs::read(path).map_err(|_| ProviderError::MissingFile(path.to_path_buf()))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    };
    Ok(format!("data:{mime};base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes)))
}

/// A chat-completion model.
pub trait ChatModel: Send + Sync {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, ProviderError>;
}

fn total_chars(messages: &[ChatMessage]) -> usize {
    messages.iter().map(ChatMessage::char_len).sum()
}

/// Blocking OpenAI-compatible HTTP client.
pub struct HttpClient {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
    retries: AtomicU64,
}

enum Attempt {
    Retry(String),
    Fatal(ProviderError),
}

impl HttpClient {
    pub fn new(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self { cfg, client, retries: AtomicU64::new(0) })
    }

    /// Retries performed over this client's lifetime.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.endpoint_url.trim_end_matches('/'))
    }

    fn token(&self) -> Result<Option<String>, ProviderError> {
        match &self.cfg.auth_token_env {
            None => Ok(None),
            Some(var) if var.is_empty() => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| ProviderError::AuthMissing(var.clone())),
        }
    }

    fn attempt(&self, url: &str, body: &Value, token: Option<&str>) -> Result<Value, Attempt> {
        let mut req = self.client.post(url).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(ProviderError::Malformed(e.to_string())));
        }
        let code = status.as_u16();
        if code == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("status {code}: {text}")));
        }
        let lower = text.to_lowercase();
        if code == 413 || lower.contains("context_length") || lower.contains("context length") {
            let len = body.to_string().chars().count();
            return Err(Attempt::Fatal(ProviderError::ContextOverflow { len, limit: 0 }));
        }
        Err(Attempt::Fatal(ProviderError::Rejected { status: code, body: text }))
    }

    /// POSTs JSON with up to `max_retries` retries on transport errors,
    /// 429 and 5xx responses.
    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let token = self.token()?;
        let url = self.url(path);
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                self.retries.fetch_add(1, Ordering::Relaxed);
                log::warn!("retrying {url} ({n}/{}) after: {last}", self.cfg.max_retries);
                std::thread::sleep(Duration::from_millis(self.cfg.retry_backoff_ms * u64::from(n)));
            }
            match self.attempt(&url, body, token.as_deref()) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(ProviderError::Transport { attempts, message: last })
    }

    pub fn embed_input(&self, input: &str) -> Result<Vec<f64>, ProviderError> {
        let body = json!({"model": self.cfg.model_name, "input": input});
        let resp = self.post_json("embeddings", &body)?;
        let arr = resp
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Malformed("missing data[0].embedding".into()))?;
        arr.iter()
            .map(|v| v.as_f64().ok_or_else(|| ProviderError::Malformed("non-numeric embedding".into())))
            .collect()
    }
}

impl ChatModel for HttpClient {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        if let Some(limit) = self.cfg.max_context_chars {
            let len = total_chars(messages);
            if len > limit {
                return Err(ProviderError::ContextOverflow { len, limit });
            }
        }
        let body = json!({
            "model": self.cfg.model_name,
            "messages": messages.iter().map(ChatMessage::to_wire).collect::<Vec<_>>(),
            "temperature": self.cfg.temperature,
        });
        let resp = self.post_json("chat/completions", &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
    }
}

/// One scripted reaction: when the user text contains `contains`, answer
/// with `reply` or fail with `error` (`"transport"` or `"overflow"`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Script for mock providers. Resolution order for chat: first matching
/// rule, then the next unused `replies` entry, then `default`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub replies: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_context_chars: Option<usize>,
    /// Embedding vectors keyed by source file name or path.
    #[serde(default)]
    pub vectors: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_vector: Option<Vec<f64>>,
}

impl MockScript {
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path).map_err(|_| ProviderError::MissingFile(path.to_path_buf()))?;
        serde_json::from_str(&text)
            .map_err(|e| ProviderError::Config(format!("mock script {}: {e}", path.display())))
    }
}

/// Scripted chat model.
pub struct MockChat {
    script: MockScript,
    cursor: AtomicUsize,
}

impl MockChat {
    pub fn new(script: MockScript) -> Self {
        Self { script, cursor: AtomicUsize::new(0) }
    }
}

fn mock_error(kind: &str, len: usize, limit: usize) -> ProviderError {
    match kind {
        "overflow" => ProviderError::ContextOverflow { len, limit },
        other => ProviderError::Transport { attempts: 1, message: format!("scripted {other} failure") },
    }
}

impl ChatModel for MockChat {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let len = total_chars(messages);
        if let Some(limit) = self.script.max_context_chars {
            if len > limit {
                return Err(ProviderError::ContextOverflow { len, limit });
            }
        }
        let user: String = messages
            .iter()
            .filter(|m| m.role == "user")
            .map(ChatMessage::text_content)
            .collect::<Vec<_>>()
            .join("\n");
        if let Some(rule) = self.script.rules.iter().find(|r| user.contains(&r.contains)) {
            return match (&rule.reply, &rule.error) {
                (_, Some(kind)) => Err(mock_error(kind, len, len)),
                (Some(reply), None) => Ok(reply.clone()),
                (None, None) => Err(ProviderError::Config("mock rule without reply".into())),
            };
        }
        let n = self.cursor.fetch_add(1, Ordering::Relaxed);
        if let Some(reply) = self.script.replies.get(n) {
            return Ok(reply.clone());
        }
        self.script
            .default
            .clone()
            .ok_or_else(|| ProviderError::Malformed("mock script has no reply for this call".into()))
    }
}

pub fn build_chat_model(cfg: &ProviderConfig) -> Result<Box<dyn ChatModel>, ProviderError> {
    match cfg.backend()? {
        Backend::OpenAi => Ok(Box::new(HttpClient::new(cfg.clone())?)),
        Backend::Mock(path) => Ok(Box::new(MockChat::new(MockScript::from_file(&path)?))),
        Backend::Precomputed => {
            Err(ProviderError::Config("precomputed provider only serves embeddings".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerOutput {
    pub plan: SkillSequence,
    pub raw_text: String,
    /// Response lines that did not parse as skill labels.
    pub skipped: Vec<String>,
}

pub const PLANNER_SYSTEM_PROMPT: &str = "You are the planning agent of a robot manipulator. \
Decompose the task into a sequence of atomic skills. Write one skill per line in the form \
Verb[object] or Verb[object1, object2], using verbs such as Reach, Move, Grasp, Release, Place, \
Insert, Close, Push, Pull, Lift and Rotate. Relational verbs (Place, Insert, Close) take the moved \
object first and the target second. Write nothing else.";

/// Parses a planner response: one label per line, list markers and blank
/// lines tolerated, unparseable lines skipped.
pub fn parse_plan_text(text: &str) -> PlannerOutput {
    let mut labels = Vec::new();
    let mut skipped = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("```") {
            continue;
        }
        let item = trimmed
            .trim_start_matches(|c: char| c.is_ascii_digit())
            .trim_start_matches(['.', ')', '-', '*'])
            .trim();
        match parse_skill(item) {
            Ok(l) => labels.push(l),
            Err(e) => {
                log::warn!("planner line skipped: {trimmed:?}: {e}");
                skipped.push(trimmed.to_string());
            }
        }
    }
    PlannerOutput { plan: SkillSequence::new(labels), raw_text: text.to_string(), skipped }
}

/// Planning agent π_plan.
pub struct Planner {
    model: Box<dyn ChatModel>,
}

impl Planner {
    pub fn new(model: Box<dyn ChatModel>) -> Self {
        Self { model }
    }

    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        Ok(Self::new(build_chat_model(cfg)?))
    }

    pub fn plan(&self, instruction: &str, scene_state: &str) -> Result<PlannerOutput, ProviderError> {
        let messages = [
            ChatMessage::system(PLANNER_SYSTEM_PROMPT),
            ChatMessage::user(format!("Instruction: {instruction}\nScene: {scene_state}")),
        ];
        Ok(parse_plan_text(&self.model.chat(&messages)?))
    }
}

/// LLM that turns a skill-augmented prompt into action text.
pub struct Completer {
    model: Box<dyn ChatModel>,
}

impl Completer {
    pub fn new(model: Box<dyn ChatModel>) -> Self {
        Self { model }
    }

    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        Ok(Self::new(build_chat_model(cfg)?))
    }

    pub fn complete(&self, prompt: &PromptBundle) -> Result<String, ProviderError> {
        let messages =
            [ChatMessage::system(prompt.system_text.clone()), ChatMessage::user(prompt.user_text())];
        self.model.chat(&messages)
    }
}

/// Where an embedding comes from.
#[derive(Debug, Clone, Copy)]
pub enum EmbedSource<'a> {
    /// JSON float array on disk.
    Precomputed(&'a Path),
    /// Image to send to the embedding model.
    Image(&'a Path),
}

enum EmbedBackend {
    PrecomputedOnly,
    Http(HttpClient),
    Mock(MockScript),
}

/// Visual embedder φ_vis; returns unit vectors and pins the dimension on
/// first use.
pub struct Embedder {
    backend: EmbedBackend,
    dim: OnceLock<usize>,
}

pub fn read_vector_file(path: &Path) -> Result<Vec<f64>, ProviderError> {
    let text = fs::read_to_string(path).map_err(|_| ProviderError::MissingFile(path.to_path_buf()))?;
    serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(format!("{}: {e}", path.display())))
}

impl Embedder {
    pub fn precomputed() -> Self {
        Self { backend: EmbedBackend::PrecomputedOnly, dim: OnceLock::new() }
    }

    pub fn mock(script: MockScript) -> Self {
        Self { backend: EmbedBackend::Mock(script), dim: OnceLock::new() }
    }

    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        let backend = match cfg.backend()? {
            Backend::Precomputed => EmbedBackend::PrecomputedOnly,
            Backend::OpenAi => EmbedBackend::Http(HttpClient::new(cfg.clone())?),
            Backend::Mock(path) => EmbedBackend::Mock(MockScript::from_file(&path)?),
        };
        Ok(Self { backend, dim: OnceLock::new() })
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    fn raw(&self, source: EmbedSource<'_>) -> Result<Vec<f64>, ProviderError> {
        match (source, &self.backend) {
            (EmbedSource::Precomputed(path), _) => read_vector_file(path),
            (EmbedSource::Image(_), EmbedBackend::PrecomputedOnly) => {
                Err(ProviderError::Config("no image embedding model configured".into()))
            }
            (EmbedSource::Image(path), EmbedBackend::Http(client)) => {
                client.embed_input(&image_data_uri(path)?)
            }
            (EmbedSource::Image(path), EmbedBackend::Mock(script)) => {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                let key = path.to_string_lossy();
                script
                    .vectors
                    .get(key.as_ref())
                    .or_else(|| script.vectors.get(name))
                    .or(script.default_vector.as_ref())
                    .cloned()
                    .ok_or_else(|| ProviderError::MissingFile(path.to_path_buf()))
            }
        }
    }

    pub fn embed(&self, source: EmbedSource<'_>) -> Result<Vec<f64>, ProviderError> {
        let v = self.raw(source)?;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(ProviderError::ZeroVector);
        }
        if !norm.is_finite() {
            return Err(ProviderError::Malformed("non-finite embedding".into()));
        }
        let expected = *self.dim.get_or_init(|| v.len());
        if expected != v.len() {
            return Err(ProviderError::DimensionMismatch { expected, got: v.len() });
        }
        Ok(crate::demo::l2_normalized(v))
    }
}
