//! Strategy-comparison contact sheets.
//!
//! Layout, one column per mask strategy:
//!
//! ```text
//! row 1   start frame | ground-truth end frame
//! row 2   mask overlay per strategy (red, 50% over the start frame)
//! row 3+  one row per prompt mode: the backend output per strategy
//! ```
//!
//! Cells are 128x128 (64x64 rasters enlarged by nearest neighbour) separated
//! by 4-pixel gutters, each with a label strip beneath it. With a single
//! column the start and end frames share the top cell at native 64x64.

use crate::dataset::FramePair;
use crate::imaging::{upscale_nearest, Frame, Mask};

use super::font::{draw_text, GLYPH_H};

pub const CELL: u32 = 128;
pub const GUTTER: u32 = 4;
pub const LABEL_H: u32 = GLYPH_H + 4;

const BACKGROUND: [u8; 3] = [255, 255, 255];
const INK: [u8; 3] = [20, 20, 20];
const PLACEHOLDER: [u8; 3] = [64, 64, 64];
const ERROR_MARK: [u8; 3] = [220, 40, 40];

/// One strategy column of a sheet. `None` entries are failed cells.
#[derive(Debug, Clone)]
pub struct SheetColumn {
    pub label: String,
    pub mask: Option<Mask>,
    /// One output per prompt mode, in row order.
    pub outputs: Vec<Option<Frame>>,
}

#[derive(Debug, Clone)]
pub struct SheetInput {
    /// Start and end frames at backend resolution.
    pub frames: FramePair,
    /// Row labels for the prompt-mode rows.
    pub modes: Vec<String>,
    pub columns: Vec<SheetColumn>,
}

/// Pixel size of a sheet with `columns` strategies and `modes` prompt rows.
pub fn sheet_dims(columns: usize, modes: usize) -> (u32, u32) {
    let cols = columns.max(1) as u32;
    let rows = 2 + modes as u32;
    (
        GUTTER + cols * (CELL + GUTTER),
        GUTTER + rows * (CELL + LABEL_H + GUTTER),
    )
}

/// Renders the grid for one action instance.
pub fn contact_sheet(input: &SheetInput) -> Frame {
    let cols = input.columns.len().max(1);
    let (w, h) = sheet_dims(input.columns.len(), input.modes.len());
    let mut sheet = Frame::filled(w, h, BACKGROUND).expect("non-zero sheet");

    let start = input.frames.start();
    let end = input.frames.end_truth();
    if cols >= 2 {
        place_cell(
            &mut sheet,
            0,
            0,
            Some(&upscale_nearest(start, CELL, CELL)),
            "START",
        );
        place_cell(
            &mut sheet,
            0,
            1,
            Some(&upscale_nearest(end, CELL, CELL)),
            "END (TRUTH)",
        );
    } else {
        let half = CELL / 2;
        let mut cell = Frame::filled(CELL, CELL, BACKGROUND).expect("non-zero cell");
        blit(&mut cell, &upscale_nearest(start, half, half), 0, half / 2);
        blit(&mut cell, &upscale_nearest(end, half, half), half, half / 2);
        place_cell(&mut sheet, 0, 0, Some(&cell), "START / END");
    }

    for (c, column) in input.columns.iter().enumerate() {
        let overlay = column
            .mask
            .as_ref()
            .map(|m| upscale_nearest(&mask_overlay(start, m), CELL, CELL));
        let label = match overlay {
            Some(_) => format!("MASK {}", column.label),
            None => "MASK ERROR".to_string(),
        };
        place_cell(&mut sheet, 1, c, overlay.as_ref(), &label);

        for (r, mode) in input.modes.iter().enumerate() {
            let output = column
                .outputs
                .get(r)
                .and_then(Option::as_ref)
                .map(|f| upscale_nearest(f, CELL, CELL));
            let label = match output {
                Some(_) => format!("{mode} {}", column.label),
                None => format!("{mode} ERROR"),
            };
            place_cell(&mut sheet, 2 + r, c, output.as_ref(), &label);
        }
    }
    sheet
}

/// Red at 50% over the frame wherever the mask is set.
pub fn mask_overlay(frame: &Frame, mask: &Mask) -> Frame {
    let mut out = frame.clone();
    if frame.dims() != mask.dims() {
        return out;
    }
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                let [r, g, b] = frame.pixel(x, y);
                out.set_pixel(x, y, [((u16::from(r) + 255) / 2) as u8, g / 2, b / 2]);
            }
        }
    }
    out
}

fn cell_origin(row: usize, col: usize) -> (u32, u32) {
    (
        GUTTER + col as u32 * (CELL + GUTTER),
        GUTTER + row as u32 * (CELL + LABEL_H + GUTTER),
    )
}

fn place_cell(sheet: &mut Frame, row: usize, col: usize, image: Option<&Frame>, label: &str) {
    let (x0, y0) = cell_origin(row, col);
    match image {
        Some(img) => blit(sheet, img, x0, y0),
        None => draw_placeholder(sheet, x0, y0),
    }
    draw_text(sheet, x0 + 1, y0 + CELL + 2, label, CELL - 1, INK);
}

fn blit(dst: &mut Frame, src: &Frame, x0: u32, y0: u32) {
    for y in 0..src.height() {
        for x in 0..src.width() {
            if x0 + x < dst.width() && y0 + y < dst.height() {
                dst.set_pixel(x0 + x, y0 + y, src.pixel(x, y));
            }
        }
    }
}

fn draw_placeholder(sheet: &mut Frame, x0: u32, y0: u32) {
    for y in 0..CELL {
        for x in 0..CELL {
            let on_cross = x.abs_diff(y) <= 1 || (x + y).abs_diff(CELL - 1) <= 1;
            sheet.set_pixel(
                x0 + x,
                y0 + y,
                if on_cross { ERROR_MARK } else { PLACEHOLDER },
            );
        }
    }
}
