//! Language-model completion clients.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompletionError {
    #[error("completion transport error: {0}")]
    Transport(String),
    #[error("completion service rejected the request: {0}")]
    Rejected(String),
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("scripted client has no response for action `{0}`")]
    NoScript(String),
    #[error("completion client misconfigured: {0}")]
    Config(String),
}

impl CompletionError {
    /// Transport failures may succeed on a retry; everything else will not.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientDescriptor {
    pub id: String,
    /// Identical requests at temperature 0 yield identical continuations.
    pub deterministic: bool,
    pub max_concurrency: usize,
}

/// Continues a text prompt. Implementations must be deterministic at
/// temperature 0 or say otherwise in their descriptor.
pub trait CompletionClient: Send + Sync {
    fn descriptor(&self) -> ClientDescriptor;
    fn complete(&self, request: &CompletionRequest) -> Result<String, CompletionError>;
}

/// Test double answering from a fixed table keyed by the query action (the
/// text after the last `Action:` label in the prompt).
#[derive(Debug, Default)]
pub struct ScriptedClient {
    table: HashMap<String, String>,
    calls: AtomicUsize,
}

impl ScriptedClient {
    pub fn new<K, V>(entries: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            table: entries
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Loads a JSON object mapping action phrases to raw continuations.
    pub fn from_json_file(path: &Path) -> Result<Self, CompletionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CompletionError::Config(format!("{}: {e}", path.display())))?;
        let table: HashMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| CompletionError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(table))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

pub(crate) fn query_action(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Action:"))
        .map(str::trim)
}

impl CompletionClient for ScriptedClient {
    fn descriptor(&self) -> ClientDescriptor {
        ClientDescriptor {
            id: "scripted".into(),
            deterministic: true,
            max_concurrency: usize::MAX,
        }
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, CompletionError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let action = query_action(&request.prompt).unwrap_or_default();
        let text = self
            .table
            .get(action)
            .ok_or_else(|| CompletionError::NoScript(action.to_string()))?;
        // Honour stop sequences the way a remote service would.
        let cut = request
            .stop
            .iter()
            .filter_map(|s| text.find(s.as_str()))
            .min()
            .unwrap_or(text.len());
        Ok(text[..cut].to_string())
    }
}

/// Settings for an HTTP completion service speaking the common
/// `{model, prompt, max_tokens, temperature, stop}` -> `{choices: [{text}]}`
/// shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API credential.
    pub credential_env: String,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Log request and response bodies (credentials redacted).
    #[serde(default)]
    pub debug: bool,
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct RemoteCompletionClient {
    config: RemoteClientConfig,
    credential: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct RemoteResponse {
    choices: Vec<RemoteChoice>,
}

#[derive(Deserialize)]
struct RemoteChoice {
    text: String,
}

impl RemoteCompletionClient {
    pub fn new(config: RemoteClientConfig) -> Result<Self, CompletionError> {
        let credential = std::env::var(&config.credential_env).map_err(|_| {
            CompletionError::Config(format!(
                "environment variable {} is not set",
                config.credential_env
            ))
        })?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            credential,
            agent,
        })
    }
}

impl CompletionClient for RemoteCompletionClient {
    fn descriptor(&self) -> ClientDescriptor {
        ClientDescriptor {
            id: format!("remote:{}", self.config.model),
            // Hosted models do not promise bit-identical output even at
            // temperature 0.
            deterministic: false,
            max_concurrency: self.config.max_concurrency.max(1),
        }
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, CompletionError> {
        let body = RemoteRequest {
            model: &self.config.model,
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            stop: &request.stop,
        };
        if self.config.debug {
            log::debug!(
                "POST {} (Authorization: Bearer <redacted>) body={}",
                self.config.endpoint,
                serde_json::to_string(&body).unwrap_or_default()
            );
        }
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.credential))
            .send_json(&body)
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        if self.config.debug {
            log::debug!(
                "response status={status} body={}",
                redact(&text, &self.credential)
            );
        }
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(CompletionError::Transport(format!("HTTP {status}"))),
            _ => return Err(CompletionError::Rejected(format!("HTTP {status}: {text}"))),
        }
        let parsed: RemoteResponse = serde_json::from_str(&text)
            .map_err(|e| CompletionError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| CompletionError::MalformedResponse("no choices".into()))
    }
}

fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "<redacted>")
    }
}
