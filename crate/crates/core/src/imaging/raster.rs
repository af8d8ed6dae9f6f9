use super::{BBox, ImagingError, Mask, Polygon};

/// Sets exactly the pixels inside the half-open box.
pub fn rasterize_box(bbox: BBox, width: u32, height: u32) -> Result<Mask, ImagingError> {
    bbox.validate(width, height)?;
    let mut mask = Mask::empty(width, height);
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            mask.set(x, y, true);
        }
    }
    Ok(mask)
}

/// Fills a polygon with the even-odd rule, sampling each pixel at its
/// centre `(x + 0.5, y + 0.5)`.
pub fn rasterize_polygon(polygon: &Polygon, width: u32, height: u32) -> Result<Mask, ImagingError> {
    polygon.validate(width, height)?;
    let verts = polygon.vertices();
    let mut mask = Mask::empty(width, height);

    let (y_lo, y_hi) = verts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| {
            (lo.min(y), hi.max(y))
        });
    let row_start = (y_lo - 0.5).ceil().max(0.0) as u32;
    let row_end = ((y_hi - 0.5).ceil().max(0.0) as u32).min(height);

    let mut crossings: Vec<f64> = Vec::with_capacity(verts.len());
    for y in row_start..row_end {
        let yc = f64::from(y) + 0.5;
        crossings.clear();
        let mut j = verts.len() - 1;
        for i in 0..verts.len() {
            let (xi, yi) = verts[i];
            let (xj, yj) = verts[j];
            // Half-open in y so a vertex on the scanline is counted once.
            if (yi > yc) != (yj > yc) {
                crossings.push((xj - xi) * (yc - yi) / (yj - yi) + xi);
            }
            j = i;
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);

        // A centre is inside when an odd number of crossings lie strictly to
        // its right; walk the sorted list once per row.
        let mut left_or_on = 0usize;
        for x in 0..width {
            let xc = f64::from(x) + 0.5;
            while left_or_on < crossings.len() && crossings[left_or_on] <= xc {
                left_or_on += 1;
            }
            if left_or_on == crossings.len() {
                break;
            }
            if (crossings.len() - left_or_on) % 2 == 1 {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}
