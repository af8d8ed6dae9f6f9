//! HTTP adapter for an out-of-process text-conditioned diffusion inpainter.
//!
//! Wire format (JSON over POST):
//!
//! ```text
//! request:  {"prompt": str, "seed": u64, "image_b64": RGB PNG, "mask_b64": mask PNG,
//!            "steps"?: u32, "guidance_scale"?: f64}
//! response: {"image_b64": RGB PNG, "meta": object}
//! ```
//!
//! The optional sampling settings are only sent when configured.

use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    composite_preserved, BackendDescriptor, BackendError, InpaintBackend, InpaintRequest,
    InpaintResult,
};
use crate::imaging;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlideAdapterConfig {
    pub endpoint: String,
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_scale: Option<f64>,
}

fn default_id() -> String {
    "glide".into()
}

fn default_timeout() -> u64 {
    300
}

fn default_concurrency() -> usize {
    1
}

impl GlideAdapterConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            id: default_id(),
            timeout_secs: default_timeout(),
            max_concurrency: default_concurrency(),
            steps: None,
            guidance_scale: None,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    seed: u64,
    image_b64: String,
    mask_b64: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    guidance_scale: Option<f64>,
}

#[derive(Deserialize)]
struct WireResponse {
    image_b64: String,
    #[serde(default)]
    meta: serde_json::Value,
}

pub struct GlideAdapter {
    config: GlideAdapterConfig,
    agent: ureq::Agent,
}

impl GlideAdapter {
    pub fn new(config: GlideAdapterConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &GlideAdapterConfig {
        &self.config
    }
}

impl InpaintBackend for GlideAdapter {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            id: self.config.id.clone(),
            deterministic: false,
            max_concurrency: self.config.max_concurrency.max(1),
        }
    }

    fn inpaint(&self, request: &InpaintRequest) -> Result<InpaintResult, BackendError> {
        let started = Instant::now();
        let body = WireRequest {
            prompt: request.prompt(),
            seed: request.seed(),
            image_b64: B64.encode(imaging::encode_frame_png(request.frame())?),
            mask_b64: B64.encode(imaging::encode_mask_png(request.mask())?),
            steps: self.config.steps,
            guidance_scale: self.config.guidance_scale,
        };
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .send_json(&body)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_string()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        match status {
            200..=299 => {}
            400 | 422 => {
                return Err(BackendError::MalformedRequest(format!(
                    "HTTP {status}: {text}"
                )))
            }
            _ => return Err(BackendError::Unavailable(format!("HTTP {status}: {text}"))),
        }

        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let png = B64
            .decode(wire.image_b64.trim())
            .map_err(|e| BackendError::MalformedResponse(format!("image_b64: {e}")))?;
        let generated = imaging::decode_frame(&png)
            .map_err(|e| BackendError::MalformedResponse(format!("image_b64: {e}")))?;
        if generated.dims() != request.frame().dims() {
            return Err(BackendError::MalformedResponse(format!(
                "response image is {:?}, request was {:?}",
                generated.dims(),
                request.frame().dims()
            )));
        }
        let frame = composite_preserved(request.frame(), &generated, request.mask())?;

        let mut meta = match wire.meta {
            serde_json::Value::Object(map) => map,
            serde_json::Value::Null => serde_json::Map::new(),
            other => {
                let mut map = serde_json::Map::new();
                map.insert("model".into(), other);
                map
            }
        };
        if let Some(steps) = self.config.steps {
            meta.entry("steps").or_insert(steps.into());
        }
        if let Some(g) = self.config.guidance_scale {
            meta.entry("guidance_scale").or_insert(g.into());
        }

        Ok(InpaintResult {
            frame,
            backend_id: self.config.id.clone(),
            elapsed_ms: started.elapsed().as_millis() as u64,
            meta: serde_json::Value::Object(meta),
        })
    }
}
