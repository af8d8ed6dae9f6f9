//! Action-effect prediction pipeline.
//!
//! Given a start-state frame, an action phrase, and annotation-derived
//! regions of interest, the pipeline builds inpainting masks, produces a text
//! prompt (the raw phrase or a few-shot effect description), and asks a
//! text-conditioned inpainting backend for the predicted end state.

pub mod backend;
pub mod dataset;
pub mod hash;
pub mod imaging;
pub mod prompts;
pub mod runner;
pub mod strategy;

pub use backend::{InpaintBackend, InpaintRequest, InpaintResult, MockBackend, BACKEND_SIZE};
pub use dataset::{ActionInstance, Detection, DetectionKind, FramePair, SegmentationRegion};
pub use imaging::{BBox, Frame, ImagingError, Mask, Polygon};
pub use prompts::{ActionEffectPair, CompletionClient, PromptMode, PromptSpec, ScriptedClient};
pub use runner::{RunConfig, RunError, RunManifest, Runner};
pub use strategy::{MaskStrategyConfig, StrategyKind};
