use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use super::{BackendDescriptor, BackendError, InpaintBackend, InpaintRequest, InpaintResult};
use crate::hash::{fnv1a64, fnv1a64_extend, splitmix64};
use crate::imaging::Frame;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic RGB bytes for `pixels` pixels (`3 * pixels` bytes).
///
/// The stream is keyed by FNV-1a over the prompt bytes followed by the seed
/// (little-endian); word `i` is SplitMix64 of `key + i * gamma`, emitted
/// little-endian.
pub fn mock_generate(prompt: &str, seed: u64, pixels: usize) -> Vec<u8> {
    let key = fnv1a64_extend(fnv1a64(prompt.as_bytes()), &seed.to_le_bytes());
    let len = pixels * 3;
    let mut out = Vec::with_capacity(len + 8);
    let mut counter = 0u64;
    while out.len() < len {
        let word = splitmix64(key.wrapping_add(counter.wrapping_mul(GOLDEN_GAMMA)));
        out.extend_from_slice(&word.to_le_bytes());
        counter += 1;
    }
    out.truncate(len);
    out
}

/// Offline stand-in for a diffusion inpainter: fills mask-true pixels, in
/// row-major order, from [`mock_generate`].
#[derive(Debug, Default)]
pub struct MockBackend {
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of `inpaint` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl InpaintBackend for MockBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            id: "mock".into(),
            deterministic: true,
            max_concurrency: usize::MAX,
        }
    }

    fn inpaint(&self, request: &InpaintRequest) -> Result<InpaintResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let started = Instant::now();
        let mask = request.mask();
        let stream = mock_generate(request.prompt(), request.seed(), mask.count_true());
        let mut pixels = request.frame().as_bytes().to_vec();
        let mut next = stream.chunks_exact(3);
        for (i, _) in mask.bits().iter().enumerate().filter(|(_, &b)| b) {
            let rgb = next.next().expect("stream sized to mask");
            pixels[i * 3..i * 3 + 3].copy_from_slice(rgb);
        }
        let frame = Frame::from_rgb(mask.width(), mask.height(), pixels)?;
        Ok(InpaintResult {
            frame,
            backend_id: "mock".into(),
            elapsed_ms: started.elapsed().as_millis() as u64,
            meta: serde_json::Value::Null,
        })
    }
}
