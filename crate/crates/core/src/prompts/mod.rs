//! Text prompts for the inpainting backend.
//!
//! Two modes: the action phrase verbatim, or a one-sentence effect
//! description obtained by few-shot completion. The few-shot prompt is a
//! list of labelled exemplars followed by the query:
//!
//! ```text
//! Action: open jar
//! Effect: The lid is off the jar.
//!
//! Action: cut apple
//! Effect:
//! ```

mod client;

pub use client::{
    ClientDescriptor, CompletionClient, CompletionError, CompletionRequest, RemoteClientConfig,
    RemoteCompletionClient, ScriptedClient,
};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ActionInstance;
use crate::hash::fnv1a64;

/// Continuations are cut at the first blank line.
pub const STOP_SEQUENCE: &str = "\n\n";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("need {requested} exemplars but only {available} pairs are available")]
    InsufficientExemplars { requested: usize, available: usize },
    #[error("exemplar count must be at least 1")]
    ZeroExemplars,
    #[error("completion was empty")]
    EmptyCompletion,
    #[error("prompt mode {0} does not use the completion client")]
    WrongMode(PromptMode),
    #[error("{path}: line {line}: {message}")]
    PairsFile {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Client(#[from] CompletionError),
}

impl PromptError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Client(e) if e.is_retryable())
    }
}

/// A human-written action and its one-sentence effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEffectPair {
    action: String,
    effect: String,
}

impl ActionEffectPair {
    pub fn new(action: impl Into<String>, effect: impl Into<String>) -> Result<Self, String> {
        let action = action.into().trim().to_string();
        let effect = effect.into().trim().to_string();
        for (name, value) in [("action", &action), ("effect", &effect)] {
            if value.is_empty() {
                return Err(format!("{name} is empty"));
            }
            if value.contains(['\n', '\r']) {
                return Err(format!("{name} spans multiple lines"));
            }
        }
        Ok(Self { action, effect })
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn effect(&self) -> &str {
        &self.effect
    }
}

/// Reads `action<TAB>effect` lines; blank lines and `#` comments are skipped.
pub fn load_pairs(path: &Path) -> Result<Vec<ActionEffectPair>, PromptError> {
    let err = |line: usize, message: String| PromptError::PairsFile {
        path: path.display().to_string(),
        line,
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(0, e.to_string()))?;
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (action, effect) = line
            .split_once('\t')
            .ok_or_else(|| err(i + 1, "expected action<TAB>effect".into()))?;
        pairs.push(ActionEffectPair::new(action, effect).map_err(|m| err(i + 1, m))?);
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ActionPhrase,
    EffectDescription,
}

impl PromptMode {
    pub const ALL: [PromptMode; 2] = [Self::ActionPhrase, Self::EffectDescription];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ActionPhrase => "action_phrase",
            Self::EffectDescription => "effect_description",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "action_phrase" | "action-phrase" | "phrase" => Ok(Self::ActionPhrase),
            "effect_description" | "effect-description" | "effect" => Ok(Self::EffectDescription),
            other => Err(format!(
                "unknown prompt mode `{other}` (expected action_phrase or effect_description)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub exemplar_count: usize,
    pub seed: u64,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            mode: PromptMode::EffectDescription,
            exemplar_count: 2,
            seed: 0,
            max_tokens: 48,
            temperature: 0.0,
        }
    }
}

/// The action phrase, unchanged.
pub fn passthrough_prompt(instance: &ActionInstance) -> String {
    instance.phrase().to_string()
}

/// Draws `k` distinct exemplars with a seeded ChaCha8 generator and renders
/// them ahead of the query action.
pub fn build_fewshot_prompt(
    pairs: &[ActionEffectPair],
    k: usize,
    action: &str,
    seed: u64,
) -> Result<String, PromptError> {
    if k == 0 {
        return Err(PromptError::ZeroExemplars);
    }
    if k > pairs.len() {
        return Err(PromptError::InsufficientExemplars {
            requested: k,
            available: pairs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prompt = String::new();
    for i in rand::seq::index::sample(&mut rng, pairs.len(), k) {
        let pair = &pairs[i];
        prompt.push_str(&format!(
            "Action: {}\nEffect: {}\n\n",
            pair.action, pair.effect
        ));
    }
    prompt.push_str(&format!("Action: {}\nEffect:", action.trim()));
    Ok(prompt)
}

/// First non-blank line of the continuation, trimmed.
pub fn parse_effect(continuation: &str) -> Result<String, PromptError> {
    continuation
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
        .ok_or(PromptError::EmptyCompletion)
}

/// Per-instance exemplar seed: the run seed XOR a stable hash of the
/// narration id.
pub fn exemplar_seed(seed: u64, narration_id: &str) -> u64 {
    seed ^ fnv1a64(narration_id.as_bytes())
}

/// Few-shot prompt -> completion (stopping at a blank line) -> first line.
pub fn effect_prompt(
    instance: &ActionInstance,
    client: &dyn CompletionClient,
    pairs: &[ActionEffectPair],
    spec: &PromptSpec,
) -> Result<String, PromptError> {
    if spec.mode != PromptMode::EffectDescription {
        return Err(PromptError::WrongMode(spec.mode));
    }
    let prompt = build_fewshot_prompt(
        pairs,
        spec.exemplar_count,
        instance.phrase(),
        exemplar_seed(spec.seed, instance.narration_id()),
    )?;
    let continuation = client.complete(&CompletionRequest {
        prompt,
        max_tokens: spec.max_tokens,
        temperature: spec.temperature,
        stop: vec![STOP_SEQUENCE.to_string()],
    })?;
    parse_effect(&continuation)
}

/// Produces the backend prompt for `mode`. The completion client is only
/// consulted for effect descriptions.
pub fn make_prompt(
    instance: &ActionInstance,
    mode: PromptMode,
    client: Option<&dyn CompletionClient>,
    pairs: &[ActionEffectPair],
    spec: &PromptSpec,
) -> Result<String, PromptError> {
    match mode {
        PromptMode::ActionPhrase => Ok(passthrough_prompt(instance)),
        PromptMode::EffectDescription => {
            let client = client
                .ok_or_else(|| CompletionError::Config("no completion client configured".into()))?;
            let spec = PromptSpec {
                mode,
                ..spec.clone()
            };
            effect_prompt(instance, client, pairs, &spec)
        }
    }
}
