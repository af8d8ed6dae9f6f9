use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::backend::GlideAdapterConfig;
use crate::dataset::{ActionInstance, FrameLayout};
use crate::prompts::{PromptMode, RemoteClientConfig};
use crate::strategy::{MaskStrategyConfig, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    /// Comma-separated annotation file.
    pub actions: PathBuf,
    /// Root of `<video_id>/frame_XXXXXXXXXX.jpg` trees.
    pub frames_dir: PathBuf,
    /// Directory of `<video_id>.json` detection documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    /// Directory of `<video_id>.json` segmentation documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentations: Option<PathBuf>,
    /// Tab-separated action/effect pairs for few-shot prompting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PathBuf>,
    #[serde(default)]
    pub frame_layout: FrameLayout,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Mock,
    Adapter(GlideAdapterConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompletionConfig {
    /// JSON lookup table from action phrase to raw continuation.
    Scripted {
        table: PathBuf,
    },
    Remote(RemoteClientConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOptions {
    pub exemplar_count: usize,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            exemplar_count: 2,
            max_tokens: 48,
            temperature: 0.0,
        }
    }
}

/// Selects instances by narration id, or by verb and/or noun.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceFilter {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub narration_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verb: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noun: Option<String>,
}

impl InstanceFilter {
    pub fn accepts(&self, instance: &ActionInstance) -> bool {
        (self.narration_ids.is_empty()
            || self
                .narration_ids
                .iter()
                .any(|id| id == instance.narration_id()))
            && self.verb.as_deref().is_none_or(|v| v == instance.verb())
            && self.noun.as_deref().is_none_or(|n| n == instance.noun())
    }
}

fn default_strategies() -> Vec<MaskStrategyConfig> {
    StrategyKind::ALL
        .into_iter()
        .map(MaskStrategyConfig::new)
        .collect()
}

fn default_modes() -> Vec<PromptMode> {
    PromptMode::ALL.to_vec()
}

fn default_parallelism() -> usize {
    1
}

fn default_retries() -> u32 {
    2
}

/// Everything a run needs; serialised verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetPaths,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<MaskStrategyConfig>,
    #[serde(default = "default_modes")]
    pub prompt_modes: Vec<PromptMode>,
    #[serde(default)]
    pub prompt: PromptOptions,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<CompletionConfig>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub filter: InstanceFilter,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Extra attempts for retryable backend and completion errors.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

impl RunConfig {
    /// A config over `dataset` with every other field at its default.
    pub fn new(dataset: DatasetPaths, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset,
            strategies: default_strategies(),
            prompt_modes: default_modes(),
            prompt: PromptOptions::default(),
            backend: BackendConfig::Mock,
            completion: None,
            seed: 0,
            output_dir: output_dir.into(),
            cache_dir: None,
            filter: InstanceFilter::default(),
            parallelism: 1,
            retries: default_retries(),
        }
    }

    /// Parses a JSON config; relative paths resolve against the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_relative_to(base);
        Ok(config)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.actions);
        fix(&mut self.dataset.frames_dir);
        for p in [
            &mut self.dataset.detections,
            &mut self.dataset.segmentations,
            &mut self.dataset.pairs,
            &mut self.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
        if let Some(CompletionConfig::Scripted { table }) = &mut self.completion {
            fix(table);
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    /// Checks that every configured input needed by the matrix is present.
    pub fn validate(&self) -> Result<(), RunError> {
        if self.strategies.is_empty() {
            return Err(RunError::Config(
                "at least one mask strategy is required".into(),
            ));
        }
        if self.prompt_modes.is_empty() {
            return Err(RunError::Config(
                "at least one prompt mode is required".into(),
            ));
        }
        if self.parallelism == 0 {
            return Err(RunError::Config("parallelism must be at least 1".into()));
        }
        for s in &self.strategies {
            s.validate().map_err(|e| RunError::Config(e.to_string()))?;
        }
        let need_dir = |what: &str, dir: &Option<PathBuf>| -> Result<(), RunError> {
            match dir {
                None => Err(RunError::Config(format!(
                    "{what} directory is not configured"
                ))),
                Some(d) if !d.is_dir() => Err(RunError::Config(format!(
                    "{what} directory {} does not exist",
                    d.display()
                ))),
                Some(_) => Ok(()),
            }
        };
        if self
            .strategies
            .iter()
            .any(|s| s.kind == StrategyKind::HandObject)
        {
            need_dir("detections", &self.dataset.detections)?;
        }
        if self
            .strategies
            .iter()
            .any(|s| s.kind == StrategyKind::Segmentation)
        {
            need_dir("segmentations", &self.dataset.segmentations)?;
        }
        if self.prompt_modes.contains(&PromptMode::EffectDescription) {
            if self.dataset.pairs.is_none() {
                return Err(RunError::Config(
                    "effect_description prompts need an action-effect pairs file".into(),
                ));
            }
            if self.completion.is_none() {
                return Err(RunError::Config(
                    "effect_description prompts need a completion client".into(),
                ));
            }
            if self.prompt.exemplar_count == 0 {
                return Err(RunError::Config("exemplar_count must be at least 1".into()));
            }
        }
        if !self.dataset.frames_dir.is_dir() {
            return Err(RunError::Config(format!(
                "frames directory {} does not exist",
                self.dataset.frames_dir.display()
            )));
        }
        Ok(())
    }

    /// Unique, filesystem-safe labels for the configured strategies: the
    /// kind name, suffixed with its position when a kind repeats.
    pub fn strategy_labels(&self) -> Vec<String> {
        self.strategies
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let repeats = self.strategies.iter().filter(|o| o.kind == s.kind).count() > 1;
                if repeats {
                    format!("{}_{i}", s.kind)
                } else {
                    s.kind.to_string()
                }
            })
            .collect()
    }
}
