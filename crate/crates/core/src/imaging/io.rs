//! PNG encoding for frames (8-bit RGB) and masks (8-bit gray, 0 = preserve,
//! 255 = regenerate).

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use super::{Frame, ImagingError, Mask};

pub fn encode_frame_png(frame: &Frame) -> Result<Vec<u8>, ImagingError> {
    let img = RgbImage::from_raw(frame.width(), frame.height(), frame.as_bytes().to_vec())
        .expect("frame buffer length is an invariant");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Decodes PNG or JPEG bytes; any alpha channel is dropped.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, ImagingError> {
    let img = image::load_from_memory(bytes)?.to_rgb8();
    let (w, h) = img.dimensions();
    Frame::from_rgb(w, h, img.into_raw())
}

pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>, ImagingError> {
    let raw = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    let img = GrayImage::from_raw(mask.width(), mask.height(), raw)
        .expect("mask buffer length is an invariant");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Decodes a single-channel mask; gray levels >= 128 count as regenerate.
pub fn decode_mask(bytes: &[u8]) -> Result<Mask, ImagingError> {
    let img = image::load_from_memory(bytes)?.to_luma8();
    let (w, h) = img.dimensions();
    Mask::from_bits(w, h, img.into_raw().into_iter().map(|v| v >= 128).collect())
}

pub fn read_frame(path: &Path) -> Result<Frame, ImagingError> {
    decode_frame(&read(path)?)
}

pub fn read_mask(path: &Path) -> Result<Mask, ImagingError> {
    decode_mask(&read(path)?)
}

pub fn write_frame_png(frame: &Frame, path: &Path) -> Result<(), ImagingError> {
    write(path, &encode_frame_png(frame)?)
}

pub fn write_mask_png(mask: &Mask, path: &Path) -> Result<(), ImagingError> {
    write(path, &encode_mask_png(mask)?)
}

fn read(path: &Path) -> Result<Vec<u8>, ImagingError> {
    std::fs::read(path).map_err(|source| ImagingError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ImagingError> {
    std::fs::write(path, bytes).map_err(|source| ImagingError::Io {
        path: path.display().to_string(),
        source,
    })
}
