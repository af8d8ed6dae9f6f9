use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cache::write_atomic, RunConfig, RunError};
use crate::backend::BackendDescriptor;
use crate::prompts::{ClientDescriptor, PromptMode};
use crate::strategy::StrategyKind;

/// One (instance, strategy, prompt mode) cell. Failed cells carry `error`
/// and whatever artifacts were produced before the failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub narration_id: String,
    /// Column label; the strategy kind, suffixed when a kind repeats.
    pub strategy: String,
    pub strategy_kind: StrategyKind,
    pub prompt_mode: PromptMode,
    pub prompt: Option<String>,
    pub mask_file: Option<String>,
    pub mask_coverage: Option<f64>,
    pub output_file: Option<String>,
    pub cache_key: Option<String>,
    pub backend_id: String,
    pub elapsed_ms: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub narration_id: String,
    pub video_id: String,
    pub phrase: String,
    pub start_frame: u64,
    pub stop_frame: u64,
    pub start_file: Option<String>,
    pub end_file: Option<String>,
    pub sheet_file: Option<String>,
    pub error: Option<String>,
}

/// Everything needed to audit or reproduce a run. Artifact paths are
/// relative to the manifest's directory and use `/` separators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub config: RunConfig,
    pub backend: BackendDescriptor,
    pub completion: Option<ClientDescriptor>,
    pub strategies: Vec<String>,
    pub prompt_modes: Vec<PromptMode>,
    pub instances: Vec<InstanceRecord>,
    pub cells: Vec<CellRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn error_count(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// Sorts instances by narration id and cells by (narration id,
    /// strategy label, prompt mode).
    pub fn sort_canonical(&mut self) {
        self.instances
            .sort_by(|a, b| a.narration_id.cmp(&b.narration_id));
        self.cells.sort_by(|a, b| {
            (&a.narration_id, &a.strategy, a.prompt_mode).cmp(&(
                &b.narration_id,
                &b.strategy,
                b.prompt_mode,
            ))
        });
    }

    pub fn cells_for<'a>(&'a self, narration_id: &'a str) -> impl Iterator<Item = &'a CellRecord> {
        self.cells
            .iter()
            .filter(move |c| c.narration_id == narration_id)
    }

    /// Pretty JSON, newline-terminated.
    pub fn to_json(&self) -> Result<String, RunError> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| RunError::Config(format!("manifest serialisation: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        write_atomic(path, self.to_json()?.as_bytes()).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }
}
