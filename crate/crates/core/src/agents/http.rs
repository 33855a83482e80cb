//! OpenAI-compatible chat-completions client.

use std::thread;

use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendDescriptor, BackendError, BackendKind, CompletionRequest, RetryPolicy};
use super::template::Message;

const COMPLETIONS_PATH: &str = "/chat/completions";

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    max_in_flight: usize,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    top_p: f64,
    seed: u64,
    max_tokens: u32,
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
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retryable(String),
    Fatal(BackendError),
}

impl HttpBackend {
    /// `endpoint` is either the full completions URL or an API base such as
    /// `http://localhost:8000/v1`.
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>) -> Result<Self, BackendError> {
        if endpoint.is_empty() {
            return Err(BackendError::Config("http backend needs an endpoint".into()));
        }
        if model.is_empty() {
            return Err(BackendError::Config("http backend needs a model name".into()));
        }
        let trimmed = endpoint.trim_end_matches('/');
        let url = if trimmed.ends_with(COMPLETIONS_PATH) {
            trimmed.to_string()
        } else {
            format!("{trimmed}{COMPLETIONS_PATH}")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(600))
            .build()
            .map_err(|e| BackendError::Config(format!("building HTTP client: {e}")))?;
        Ok(Self {
            client,
            url,
            model: model.to_string(),
            api_key,
            retry: RetryPolicy::default(),
            max_in_flight: 1,
        })
    }

    /// Reads the API key from the environment variable named in the
    /// descriptor; the key itself never appears in configs or manifests.
    pub fn from_descriptor(d: &BackendDescriptor) -> Result<Self, BackendError> {
        let BackendKind::Http {
            endpoint,
            model,
            api_key_env,
        } = &d.kind
        else {
            return Err(BackendError::Config("not an http descriptor".into()));
        };
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        Ok(Self::new(endpoint, model, api_key)?
            .with_retry(d.retry)
            .with_max_in_flight(d.max_in_flight))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &[u8]) -> Result<String, Attempt> {
        let mut req = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retryable(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retryable(format!("status {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Refusal {
                status: status.as_u16(),
                body: text,
            }));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(BackendError::MalformedResponse(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(BackendError::MalformedResponse("no choices[0].message.content".into())))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let p = &request.params;
        // Serialized once; every retry sends identical bytes.
        let body = serde_json::to_vec(&ChatRequest {
            model: &self.model,
            messages: &request.messages,
            temperature: p.temperature,
            top_p: p.top_p,
            seed: p.seed,
            max_tokens: p.max_output_tokens,
        })
        .map_err(|e| BackendError::Config(e.to_string()))?;

        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                thread::sleep(self.retry.backoff(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(msg)) => last = msg,
            }
        }
        Err(BackendError::Transport {
            attempts: self.retry.max_attempts,
            message: last,
        })
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}
