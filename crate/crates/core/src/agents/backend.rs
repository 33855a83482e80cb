//! Backend abstraction and the deterministic backends used for tests and
//! replay.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::http::HttpBackend;
use super::template::{Message, Role};
use crate::hashing::canonical_hash;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no recorded response for request {hash}")]
    FixtureMiss { hash: String },
    #[error("backend refused the request with status {status}: {body}")]
    Refusal { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Errors caused by the descriptor rather than by a call.
    pub fn is_config(&self) -> bool {
        matches!(self, BackendError::Config(_))
    }
}

/// Sampling parameters sent with every call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    pub max_output_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.3,
            top_p: 1.0,
            seed: 42,
            max_output_tokens: 4096,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        Ok(())
    }
}

/// One model call: the rendered messages plus sampling parameters.
///
/// `payload` is the text bound to the template's `input` slot. Mock
/// backends operate on it; it is not part of the content hash.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub params: GenerationParams,
    pub payload: Option<String>,
}

#[derive(Serialize)]
struct HashedRequest<'a> {
    messages: &'a [Message],
    params: &'a GenerationParams,
}

impl CompletionRequest {
    pub fn new(messages: Vec<Message>, params: GenerationParams) -> Self {
        Self {
            messages,
            params,
            payload: None,
        }
    }

    pub fn with_payload(mut self, payload: impl Into<String>) -> Self {
        self.payload = Some(payload.into());
        self
    }

    /// Lowercase hex SHA-256 over the canonical JSON of messages and params.
    pub fn content_hash(&self) -> String {
        canonical_hash(&HashedRequest {
            messages: &self.messages,
            params: &self.params,
        })
    }

    /// The payload, falling back to the last user message.
    pub fn payload_text(&self) -> &str {
        if let Some(p) = &self.payload {
            return p;
        }
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

/// A chat-completion provider. Implementations must tolerate up to
/// `max_in_flight` concurrent `complete` calls.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;

    fn max_in_flight(&self) -> usize {
        1
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base · 2^(retry−1).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64 << retry.saturating_sub(1).min(20);
        Duration::from_millis(self.base_backoff_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendKind {
    Http {
        endpoint: String,
        model: String,
        /// Name of the environment variable holding the API key.
        api_key_env: Option<String>,
    },
    MockIdentity,
    MockTruncate {
        ratio: f64,
    },
    MockHalve,
    Fixture {
        path: PathBuf,
    },
}

/// Serializable description of a backend. Each kind carries exactly its
/// own fields; unknown or foreign fields are rejected on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DescriptorRepr", into = "DescriptorRepr")]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DescriptorRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixture_path: Option<PathBuf>,
    #[serde(default = "one")]
    max_in_flight: usize,
    #[serde(default)]
    retry: RetryPolicy,
}

fn one() -> usize {
    1
}

impl TryFrom<DescriptorRepr> for BackendDescriptor {
    type Error = String;

    fn try_from(r: DescriptorRepr) -> Result<Self, Self::Error> {
        let mut foreign = Vec::new();
        let mut check = |set: bool, field: &str| {
            if set {
                foreign.push(field.to_string());
            }
        };
        let kind = match r.kind.as_str() {
            "http" => {
                check(r.ratio.is_some(), "ratio");
                check(r.fixture_path.is_some(), "fixture_path");
                BackendKind::Http {
                    endpoint: r.endpoint.clone().ok_or("http backend needs `endpoint`")?,
                    model: r.model.clone().ok_or("http backend needs `model`")?,
                    api_key_env: r.api_key_env.clone(),
                }
            }
            "mock_identity" | "mock_halve" | "mock_truncate" | "fixture" => {
                check(r.endpoint.is_some(), "endpoint");
                check(r.model.is_some(), "model");
                check(r.api_key_env.is_some(), "api_key_env");
                match r.kind.as_str() {
                    "mock_identity" | "mock_halve" => {
                        check(r.ratio.is_some(), "ratio");
                        check(r.fixture_path.is_some(), "fixture_path");
                        if r.kind == "mock_identity" {
                            BackendKind::MockIdentity
                        } else {
                            BackendKind::MockHalve
                        }
                    }
                    "mock_truncate" => {
                        check(r.fixture_path.is_some(), "fixture_path");
                        BackendKind::MockTruncate {
                            ratio: r.ratio.ok_or("mock_truncate backend needs `ratio`")?,
                        }
                    }
                    _ => {
                        check(r.ratio.is_some(), "ratio");
                        BackendKind::Fixture {
                            path: r
                                .fixture_path
                                .clone()
                                .ok_or("fixture backend needs `fixture_path`")?,
                        }
                    }
                }
            }
            other => return Err(format!("unknown backend kind {other:?}")),
        };
        if !foreign.is_empty() {
            return Err(format!(
                "backend kind {} does not take field(s): {}",
                r.kind,
                foreign.join(", ")
            ));
        }
        let descriptor = BackendDescriptor {
            kind,
            max_in_flight: r.max_in_flight,
            retry: r.retry,
        };
        descriptor.validate()?;
        Ok(descriptor)
    }
}

impl From<BackendDescriptor> for DescriptorRepr {
    fn from(d: BackendDescriptor) -> Self {
        let mut r = DescriptorRepr {
            max_in_flight: d.max_in_flight,
            retry: d.retry,
            ..Default::default()
        };
        r.kind = match d.kind {
            BackendKind::Http {
                endpoint,
                model,
                api_key_env,
            } => {
                r.endpoint = Some(endpoint);
                r.model = Some(model);
                r.api_key_env = api_key_env;
                "http"
            }
            BackendKind::MockIdentity => "mock_identity",
            BackendKind::MockTruncate { ratio } => {
                r.ratio = Some(ratio);
                "mock_truncate"
            }
            BackendKind::MockHalve => "mock_halve",
            BackendKind::Fixture { path } => {
                r.fixture_path = Some(path);
                "fixture"
            }
        }
        .to_string();
        r
    }
}

impl BackendDescriptor {
    pub fn new(kind: BackendKind) -> Self {
        Self {
            kind,
            max_in_flight: 1,
            retry: RetryPolicy::default(),
        }
    }

    pub fn mock_identity() -> Self {
        Self::new(BackendKind::MockIdentity)
    }

    pub fn mock_halve() -> Self {
        Self::new(BackendKind::MockHalve)
    }

    pub fn mock_truncate(ratio: f64) -> Self {
        Self::new(BackendKind::MockTruncate { ratio })
    }

    pub fn fixture(path: impl Into<PathBuf>) -> Self {
        Self::new(BackendKind::Fixture { path: path.into() })
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        if self.retry.max_attempts == 0 {
            return Err("retry.max_attempts must be at least 1".into());
        }
        match &self.kind {
            BackendKind::MockTruncate { ratio } if !(*ratio > 0.0 && *ratio <= 1.0) => {
                Err(format!("mock_truncate ratio must be in (0, 1], got {ratio}"))
            }
            BackendKind::Http { endpoint, .. } if endpoint.trim().is_empty() => {
                Err("http backend needs an endpoint".into())
            }
            BackendKind::Http { model, .. } if model.trim().is_empty() => Err("http backend needs a model".into()),
            _ => Ok(()),
        }
    }

    /// Parses the short CLI form: `mock-identity`, `mock-halve`,
    /// `mock-truncate:0.6`, `fixture:path/to/file.json`, `http`.
    /// HTTP endpoint and model are filled in separately.
    pub fn parse_short(spec: &str) -> Result<Self, String> {
        let (head, arg) = spec.split_once(':').map_or((spec, None), |(h, a)| (h, Some(a)));
        let kind = match (head.replace('_', "-").as_str(), arg) {
            ("mock-identity", None) => BackendKind::MockIdentity,
            ("mock-halve", None) => BackendKind::MockHalve,
            ("mock-truncate", Some(r)) => BackendKind::MockTruncate {
                ratio: r.parse().map_err(|_| format!("invalid truncation ratio {r:?}"))?,
            },
            ("fixture", Some(p)) => BackendKind::Fixture { path: p.into() },
            ("http", None) => BackendKind::Http {
                endpoint: String::new(),
                model: String::new(),
                api_key_env: None,
            },
            _ => return Err(format!("unrecognized backend {spec:?}")),
        };
        let d = Self::new(kind);
        if !matches!(d.kind, BackendKind::Http { .. }) {
            d.validate()?;
        }
        Ok(d)
    }

    /// Instantiates the backend.
    pub fn build(&self) -> Result<Box<dyn Backend>, BackendError> {
        self.validate().map_err(BackendError::Config)?;
        Ok(match &self.kind {
            BackendKind::MockIdentity => Box::new(MockBackend::identity().with_max_in_flight(self.max_in_flight)),
            BackendKind::MockHalve => Box::new(MockBackend::halve().with_max_in_flight(self.max_in_flight)),
            BackendKind::MockTruncate { ratio } => {
                Box::new(MockBackend::truncate(*ratio).with_max_in_flight(self.max_in_flight))
            }
            BackendKind::Fixture { path } => {
                Box::new(FixtureBackend::load(path)?.with_max_in_flight(self.max_in_flight))
            }
            BackendKind::Http { .. } => Box::new(HttpBackend::from_descriptor(self)?),
        })
    }
}

/// First `ceil(ratio · W)` words of `text`, joined by single spaces.
///
/// The product is nudged down by a relative 1e-9 before rounding up, so
/// ratios such as 0.4 that are not exact in binary still give
/// `ceil(0.4 · 100) = 40`.
pub fn truncate_words(text: &str, ratio: f64) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    let exact = ratio * words.len() as f64;
    let keep = (exact - 1e-9 * exact.max(1.0)).ceil().max(0.0) as usize;
    words[..keep.min(words.len())].join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MockMode {
    Identity,
    Truncate(f64),
}

/// Deterministic stand-in for a model: echoes or truncates the payload.
#[derive(Debug, Clone)]
pub struct MockBackend {
    mode: MockMode,
    max_in_flight: usize,
}

impl MockBackend {
    pub fn identity() -> Self {
        Self {
            mode: MockMode::Identity,
            max_in_flight: 1,
        }
    }

    pub fn truncate(ratio: f64) -> Self {
        Self {
            mode: MockMode::Truncate(ratio),
            max_in_flight: 1,
        }
    }

    pub fn halve() -> Self {
        Self::truncate(0.5)
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let payload = request.payload_text();
        Ok(match self.mode {
            MockMode::Identity => payload.to_string(),
            MockMode::Truncate(r) => truncate_words(payload, r),
        })
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}

/// Replays recorded responses keyed by request content hash.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    responses: BTreeMap<String, String>,
    max_in_flight: usize,
}

impl FixtureBackend {
    pub fn new(responses: BTreeMap<String, String>) -> Self {
        Self {
            responses,
            max_in_flight: 1,
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading fixture {}: {e}", path.display())))?;
        let responses = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("parsing fixture {}: {e}", path.display())))?;
        Ok(Self::new(responses))
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn responses(&self) -> &BTreeMap<String, String> {
        &self.responses
    }
}

impl Backend for FixtureBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let hash = request.content_hash();
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(BackendError::FixtureMiss { hash })
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}

/// Returns canned responses in order, one per call. Used to author
/// fixtures for a known chain of outputs.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Mutex<std::collections::VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(responses.into_iter().map(Into::into).collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("script lock poisoned").len()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, _request: &CompletionRequest) -> Result<String, BackendError> {
        self.script
            .lock()
            .expect("script lock poisoned")
            .pop_front()
            .ok_or_else(|| BackendError::MalformedResponse("script exhausted".into()))
    }
}

/// Wraps a backend and records every successful response, producing a
/// fixture file that [`FixtureBackend`] can replay.
pub struct FixtureRecorder<B> {
    inner: B,
    recorded: Mutex<BTreeMap<String, String>>,
}

impl<B: Backend> FixtureRecorder<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn recorded(&self) -> BTreeMap<String, String> {
        self.recorded.lock().expect("recorder lock poisoned").clone()
    }

    /// Writes the recorded map as pretty JSON.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(&self.recorded()).map_err(std::io::Error::other)?;
        std::fs::write(path, json + "\n")
    }
}

impl<B: Backend> Backend for FixtureRecorder<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let response = self.inner.complete(request)?;
        self.recorded
            .lock()
            .expect("recorder lock poisoned")
            .insert(request.content_hash(), response.clone());
        Ok(response)
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}
