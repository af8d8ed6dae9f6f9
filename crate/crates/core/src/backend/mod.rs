//! Text-conditioned inpainting backends.
//!
//! Every backend must return the input pixels unchanged wherever the mask is
//! false. Backends whose generator cannot promise that re-composite with
//! [`composite_preserved`] before returning.

mod adapter;
mod mock;

pub use adapter::{GlideAdapter, GlideAdapterConfig};
pub use mock::{mock_generate, MockBackend};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{Frame, ImagingError, Mask};

/// Side length of the square rasters exchanged with backends.
pub const BACKEND_SIZE: u32 = 64;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed inpaint request: {0}")]
    MalformedRequest(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Unavailable(_))
    }
}

/// A validated 64x64 frame + mask + prompt + seed.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintRequest {
    frame: Frame,
    mask: Mask,
    prompt: String,
    seed: u64,
}

impl InpaintRequest {
    pub fn new(
        frame: Frame,
        mask: Mask,
        prompt: impl Into<String>,
        seed: u64,
    ) -> Result<Self, BackendError> {
        let prompt = prompt.into();
        let want = (BACKEND_SIZE, BACKEND_SIZE);
        if frame.dims() != want {
            return Err(BackendError::MalformedRequest(format!(
                "frame is {:?}, backends take {want:?}",
                frame.dims()
            )));
        }
        if mask.dims() != want {
            return Err(BackendError::MalformedRequest(format!(
                "mask is {:?}, backends take {want:?}",
                mask.dims()
            )));
        }
        if prompt.trim().is_empty() {
            return Err(BackendError::MalformedRequest("empty prompt".into()));
        }
        Ok(Self {
            frame,
            mask,
            prompt,
            seed,
        })
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintResult {
    pub frame: Frame,
    pub backend_id: String,
    pub elapsed_ms: u64,
    /// Backend-reported settings and diagnostics, if any.
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub id: String,
    pub deterministic: bool,
    pub max_concurrency: usize,
}

pub trait InpaintBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;
    fn inpaint(&self, request: &InpaintRequest) -> Result<InpaintResult, BackendError>;
}

/// Copies `original` over `generated` on every mask-false pixel.
pub fn composite_preserved(
    original: &Frame,
    generated: &Frame,
    mask: &Mask,
) -> Result<Frame, BackendError> {
    if generated.dims() != original.dims() || mask.dims() != original.dims() {
        return Err(BackendError::MalformedResponse(format!(
            "generated frame is {:?}, expected {:?}",
            generated.dims(),
            original.dims()
        )));
    }
    let mut out = generated.as_bytes().to_vec();
    for (i, &regen) in mask.bits().iter().enumerate() {
        if !regen {
            out[i * 3..i * 3 + 3].copy_from_slice(&original.as_bytes()[i * 3..i * 3 + 3]);
        }
    }
    Ok(Frame::from_rgb(original.width(), original.height(), out)?)
}
