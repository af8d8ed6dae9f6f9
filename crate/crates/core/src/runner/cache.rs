//! Content-addressed store of backend outputs, laid out as
//! `<root>/<first two hex digits>/<digest>.png` with a JSON sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::InpaintRequest;
use crate::imaging::{self, Frame};

/// SHA-256 over length-prefixed (backend id, prompt, seed, frame, mask).
pub fn cache_key(request: &InpaintRequest, backend_id: &str) -> String {
    let mut hasher = Sha256::new();
    let mut field = |bytes: &[u8]| {
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    };
    field(backend_id.as_bytes());
    field(request.prompt().as_bytes());
    field(&request.seed().to_le_bytes());
    let (fw, fh) = request.frame().dims();
    field(&[fw.to_le_bytes(), fh.to_le_bytes()].concat());
    field(request.frame().as_bytes());
    let (mw, mh) = request.mask().dims();
    field(&[mw.to_le_bytes(), mh.to_le_bytes()].concat());
    let bits: Vec<u8> = request.mask().bits().iter().map(|&b| u8::from(b)).collect();
    field(&bits);
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntryMeta {
    pub backend_id: String,
    pub elapsed_ms: u64,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct OutputCache {
    root: PathBuf,
}

impl OutputCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_path(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.png"))
    }

    fn meta_path(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.json"))
    }

    /// Returns the stored frame and sidecar, or `None` on a miss or an
    /// unreadable entry.
    pub fn get(&self, key: &str) -> Option<(Frame, CacheEntryMeta)> {
        let frame = imaging::read_frame(&self.image_path(key)).ok()?;
        let meta = std::fs::read_to_string(self.meta_path(key)).ok()?;
        let meta = serde_json::from_str(&meta).ok()?;
        Some((frame, meta))
    }

    /// Writes image then sidecar, each via temp-file-and-rename. Readers
    /// treat a missing sidecar as a miss, so a torn pair is never served.
    pub fn put(&self, key: &str, frame: &Frame, meta: &CacheEntryMeta) -> std::io::Result<()> {
        let dir = self.root.join(&key[..2]);
        std::fs::create_dir_all(&dir)?;
        let png = imaging::encode_frame_png(frame).map_err(std::io::Error::other)?;
        write_atomic(&self.image_path(key), &png)?;
        let json = serde_json::to_vec(meta).map_err(std::io::Error::other)?;
        write_atomic(&self.meta_path(key), &json)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
