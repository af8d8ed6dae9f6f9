//! Raster primitives: RGB frames, boolean masks, and the box/polygon
//! geometry that mask strategies are assembled from.
//!
//! Mask polarity is fixed across the crate: `true` marks a pixel the
//! inpainting backend must regenerate, `false` a pixel it must preserve.

mod io;
mod morph;
mod raster;
mod resize;

pub use io::{
    decode_frame, decode_mask, encode_frame_png, encode_mask_png, read_frame, read_mask,
    write_frame_png, write_mask_png,
};
pub use morph::{coverage, dilate, downsample_mask, union};
pub use raster::{rasterize_box, rasterize_polygon};
pub use resize::{resize_frame, upscale_nearest};

use thiserror::Error;

/// Errors raised by the imaging primitives.
#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("cannot take the union of an empty mask list")]
    EmptyUnion,
    #[error("mask downsampling cannot upscale {from:?} to {to:?}")]
    UnsupportedDirection { from: (u32, u32), to: (u32, u32) },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An 8-bit RGB raster stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    /// Wraps a row-major RGB buffer. The buffer must hold exactly
    /// `width * height * 3` bytes.
    pub fn from_rgb(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidRaster(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImagingError::InvalidRaster(format!(
                "frame buffer holds {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// A frame filled with one colour.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::from_rgb(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x},{y}) out of bounds"
        );
        (y as usize * self.width as usize + x as usize) * 3
    }
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// A boolean raster aligned to a [`Frame`]; `true` = regenerate.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::new(width, height, false)
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(width, height, true)
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(ImagingError::InvalidRaster(format!(
                "mask holds {} bits, expected {expected}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Builds a mask by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits[i] = value;
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// `true` when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x},{y}) out of bounds"
        );
        y as usize * self.width as usize + x as usize
    }
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("true_bits", &self.count_true())
            .finish()
    }
}

/// Axis-aligned pixel box, half-open: `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub const fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.x_max.saturating_sub(self.x_min))
            * u64::from(self.y_max.saturating_sub(self.y_min))
    }

    /// Checks non-degeneracy and containment in a `width x height` canvas.
    pub fn validate(&self, width: u32, height: u32) -> Result<(), ImagingError> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(ImagingError::InvalidGeometry(format!(
                "degenerate box {self:?}"
            )));
        }
        if self.x_max > width || self.y_max > height {
            return Err(ImagingError::InvalidGeometry(format!(
                "box {self:?} exceeds {width}x{height} canvas"
            )));
        }
        Ok(())
    }
}

/// A closed polygon outline in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self, ImagingError> {
        if vertices.len() < 3 {
            return Err(ImagingError::InvalidGeometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices
            .iter()
            .any(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(ImagingError::InvalidGeometry(
                "polygon vertex is not finite".into(),
            ));
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle outline covering the same pixels as `bbox`.
    pub fn from_bbox(bbox: BBox) -> Self {
        let (x0, y0, x1, y1) = (
            f64::from(bbox.x_min),
            f64::from(bbox.y_min),
            f64::from(bbox.x_max),
            f64::from(bbox.y_max),
        );
        Self {
            vertices: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)],
        }
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<(), ImagingError> {
        let (w, h) = (f64::from(width), f64::from(height));
        match self
            .vertices
            .iter()
            .find(|(x, y)| *x < 0.0 || *y < 0.0 || *x > w || *y > h)
        {
            Some(v) => Err(ImagingError::InvalidGeometry(format!(
                "polygon vertex {v:?} outside {width}x{height} canvas"
            ))),
            None => Ok(()),
        }
    }
}
