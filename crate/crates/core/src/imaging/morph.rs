use super::{ImagingError, Mask};

/// Bitwise OR of a non-empty list of equally sized masks.
pub fn union<'a, I>(masks: I) -> Result<Mask, ImagingError>
where
    I: IntoIterator<Item = &'a Mask>,
{
    let mut iter = masks.into_iter();
    let first = iter.next().ok_or(ImagingError::EmptyUnion)?;
    let mut bits = first.bits().to_vec();
    for m in iter {
        if m.dims() != first.dims() {
            return Err(ImagingError::DimensionMismatch {
                expected: first.dims(),
                actual: m.dims(),
            });
        }
        for (acc, &b) in bits.iter_mut().zip(m.bits()) {
            *acc |= b;
        }
    }
    Mask::from_bits(first.width(), first.height(), bits)
}

/// Grows the true set by a square (Chebyshev) structuring element.
///
/// Separable: a horizontal max-filter followed by a vertical one, each
/// computed from running counts so cost is independent of `radius`.
pub fn dilate(mask: &Mask, radius: u32) -> Mask {
    if radius == 0 || mask.is_empty() {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;

    let horizontal = sliding_any(mask.bits(), w, h, r, |x, y| y * w + x);
    let vertical = sliding_any(&horizontal, h, w, r, |y, x| y * w + x);
    Mask::from_bits(mask.width(), mask.height(), vertical).expect("dimensions preserved")
}

// For each of `lines` lines of length `len`, marks positions with any set bit
// within `r` along the line. `index(pos, line)` maps to the flat buffer.
fn sliding_any(
    src: &[bool],
    len: usize,
    lines: usize,
    r: usize,
    index: impl Fn(usize, usize) -> usize,
) -> Vec<bool> {
    let mut out = vec![false; src.len()];
    let mut prefix = vec![0u32; len + 1];
    for line in 0..lines {
        for pos in 0..len {
            prefix[pos + 1] = prefix[pos] + u32::from(src[index(pos, line)]);
        }
        for pos in 0..len {
            let lo = pos.saturating_sub(r);
            let hi = (pos + r + 1).min(len);
            out[index(pos, line)] = prefix[hi] > prefix[lo];
        }
    }
    out
}

/// Coverage-max reduction: an output pixel is true iff any source pixel in
/// its footprint is true. Source pixel `x` belongs to output column
/// `floor(x * out_w / width)`, so footprints partition the source.
pub fn downsample_mask(mask: &Mask, out_w: u32, out_h: u32) -> Result<Mask, ImagingError> {
    let (w, h) = mask.dims();
    if out_w == 0 || out_h == 0 || out_w > w || out_h > h {
        return Err(ImagingError::UnsupportedDirection {
            from: (w, h),
            to: (out_w, out_h),
        });
    }
    if (out_w, out_h) == (w, h) {
        return Ok(mask.clone());
    }
    let col_of: Vec<u32> = (0..w)
        .map(|x| (u64::from(x) * u64::from(out_w) / u64::from(w)) as u32)
        .collect();
    let mut out = Mask::empty(out_w, out_h);
    for y in 0..h {
        let oy = (u64::from(y) * u64::from(out_h) / u64::from(h)) as u32;
        for x in 0..w {
            if mask.get(x, y) {
                out.set(col_of[x as usize], oy, true);
            }
        }
    }
    Ok(out)
}

/// Fraction of pixels that are true.
pub fn coverage(mask: &Mask) -> f64 {
    let total = mask.bits().len();
    if total == 0 {
        return 0.0;
    }
    mask.count_true() as f64 / total as f64
}
