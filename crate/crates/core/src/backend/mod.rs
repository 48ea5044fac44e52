//! Model endpoints behind one client: choice scoring, text generation,
//! content-addressed caching, retries and bounded concurrency.

mod cache;
mod client;
mod http;
mod mock;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::choice::{DistributionError, Letter};

pub use cache::{CacheEntry, ResponseCache};
pub use client::{Client, ClientStats};
pub use http::HttpTransport;
pub use mock::{MockGeneration, MockScoring, MockSpec, MockTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    HttpCompletions,
    Mock,
    ToySim,
}

/// How a choice distribution is read off the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Next-token log-probabilities of the bare letter token, with and
    /// without a leading space, renormalized over the candidates.
    #[default]
    Logprob,
    /// Greedy generation, first candidate letter parsed as a one-hot answer.
    GenerateParse,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    250
}
fn default_top_logprobs() -> u32 {
    20
}

/// Endpoint description, usually read from the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u32,
    #[serde(default)]
    pub scoring: ScoringMode,
    /// Wraps raw prompts for completion endpoints; must contain `{prompt}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockSpec>,
}

impl BackendSpec {
    pub fn new(kind: BackendKind, model_name: impl Into<String>) -> Self {
        BackendSpec {
            kind,
            base_url: None,
            model_name: model_name.into(),
            api_key_env: None,
            request_timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            max_retries: default_retries(),
            retry_backoff_ms: default_backoff(),
            top_logprobs: default_top_logprobs(),
            scoring: ScoringMode::default(),
            prompt_template: None,
            mock: None,
        }
    }

    pub fn mock(model_name: impl Into<String>, mock: MockSpec) -> Self {
        BackendSpec {
            mock: Some(mock),
            ..BackendSpec::new(BackendKind::Mock, model_name)
        }
    }

    pub fn http(kind: BackendKind, base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendSpec {
            base_url: Some(base_url.into()),
            ..BackendSpec::new(kind, model_name)
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.model_name.trim().is_empty() {
            return Err(BackendError::Config("model_name must be non-empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        if matches!(self.kind, BackendKind::HttpChat | BackendKind::HttpCompletions)
            && self.base_url.as_deref().is_none_or(|u| u.trim().is_empty())
        {
            return Err(BackendError::Config(format!(
                "{:?} backend {} needs base_url",
                self.kind, self.model_name
            )));
        }
        if let Some(t) = &self.prompt_template {
            if !t.contains("{prompt}") {
                return Err(BackendError::Config(
                    "prompt_template must contain {prompt}".into(),
                ));
            }
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return Err(BackendError::Config("request_timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }
}

/// Sampling parameters for [`Client::generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
    /// Sampling seed forwarded to the endpoint; seeded requests are cached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerateParams {
    pub fn greedy(max_tokens: u32) -> Self {
        GenerateParams {
            max_tokens,
            temperature: 0.0,
            stop: Vec::new(),
            seed: None,
        }
    }

    pub fn with_stop<I, S>(mut self, stop: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stop = stop.into_iter().map(Into::into).collect();
        self
    }

    pub fn is_cacheable(&self) -> bool {
        self.temperature == 0.0 || self.seed.is_some()
    }
}

/// What a transport returns for a next-token scoring request.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreBody {
    /// Top next-token candidates as `(token, logprob)`.
    TopLogprobs(Vec<(String, f64)>),
    /// A distribution over the requested letters, already normalized.
    Direct(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawScore {
    pub body: ScoreBody,
    pub raw: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCompletion {
    pub text: String,
    pub finish_reason: Option<String>,
    pub raw: Value,
}

/// The wire-level half of a backend. Implementations perform exactly one
/// request per call; caching and retries live in [`Client`].
pub trait Transport: Send + Sync {
    fn score(&self, prompt: &str, letters: &[Letter], top_k: u32) -> Result<RawScore, BackendError>;

    fn complete(&self, prompt: &str, params: &GenerateParams) -> Result<RawCompletion, BackendError>;
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("transport failure: {message}")]
    Transport { message: String, retryable: bool },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unsupported backend capability: {0}")]
    Unsupported(String),
    #[error("returned letters do not match the candidates {expected}: {got}")]
    LettersMismatch { expected: String, got: String },
    #[error("content filter refusal: {0}")]
    ContentFiltered(String),
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
    #[error("giving up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        #[source]
        last: Box<BackendError>,
    },
    #[error("cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { retryable, .. } => *retryable,
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}
