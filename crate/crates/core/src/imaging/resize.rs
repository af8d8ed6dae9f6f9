use super::{Frame, ImagingError};

/// Bilinear resampling with pixel-centre alignment and edge clamping.
///
/// An exact 2:1 reduction samples midway between source pixels, so each
/// output is the mean of its 2x2 source block.
pub fn resize_frame(frame: &Frame, out_w: u32, out_h: u32) -> Result<Frame, ImagingError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImagingError::InvalidRaster(format!(
            "resize target must be positive, got {out_w}x{out_h}"
        )));
    }
    if frame.dims() == (out_w, out_h) {
        return Ok(frame.clone());
    }
    let (w, h) = frame.dims();
    let xs = axis_taps(w, out_w);
    let ys = axis_taps(h, out_h);
    let src = frame.as_bytes();
    let stride = w as usize * 3;

    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for &(y0, y1, fy) in &ys {
        let row0 = &src[y0 * stride..(y0 + 1) * stride];
        let row1 = &src[y1 * stride..(y1 + 1) * stride];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let p00 = f64::from(row0[x0 * 3 + c]);
                let p01 = f64::from(row0[x1 * 3 + c]);
                let p10 = f64::from(row1[x0 * 3 + c]);
                let p11 = f64::from(row1[x1 * 3 + c]);
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                let v = top + (bottom - top) * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Frame::from_rgb(out_w, out_h, out)
}

// (lower index, upper index, weight of upper) for each output coordinate.
fn axis_taps(src_len: u32, dst_len: u32) -> Vec<(usize, usize, f64)> {
    let scale = f64::from(src_len) / f64::from(dst_len);
    let max = src_len as usize - 1;
    (0..dst_len)
        .map(|i| {
            let s = ((f64::from(i) + 0.5) * scale - 0.5).max(0.0);
            let lo = (s.floor() as usize).min(max);
            let hi = (lo + 1).min(max);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Integer-factor nearest-neighbour enlargement, used for display cells.
pub fn upscale_nearest(frame: &Frame, out_w: u32, out_h: u32) -> Frame {
    let (w, h) = frame.dims();
    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for y in 0..out_h {
        let sy = (u64::from(y) * u64::from(h) / u64::from(out_h)) as u32;
        for x in 0..out_w {
            let sx = (u64::from(x) * u64::from(w) / u64::from(out_w)) as u32;
            out.extend_from_slice(&frame.pixel(sx, sy));
        }
    }
    Frame::from_rgb(out_w, out_h, out).expect("positive output dimensions")
}
