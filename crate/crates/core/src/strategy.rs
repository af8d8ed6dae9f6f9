//! Mask strategies: a fixed lower-band mask, the union of hand/object
//! detection boxes, or the union of segmentation outlines.
//!
//! Masks are built at the source resolution of the frame; callers reduce
//! them to the backend resolution with [`downsample_mask`](crate::imaging::downsample_mask).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Detection, SegmentationRegion};
use crate::imaging::{self, ImagingError, Mask};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("{kind} strategy produced an empty mask: no region scored above {threshold}")]
    EmptyMask { kind: StrategyKind, threshold: f64 },
    #[error("{kind} strategy requires annotations that were not supplied")]
    MissingAnnotations { kind: StrategyKind },
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Fixed,
    HandObject,
    Segmentation,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [Self::Fixed, Self::HandObject, Self::Segmentation];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::HandObject => "hand_object",
            Self::Segmentation => "segmentation",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "fixed" => Ok(Self::Fixed),
            "hand_object" | "hand-object" => Ok(Self::HandObject),
            "segmentation" => Ok(Self::Segmentation),
            other => Err(format!(
                "unknown mask strategy `{other}` (expected fixed, hand_object or segmentation)"
            )),
        }
    }
}

/// What to do when a detection-driven strategy finds nothing above threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyMaskFallback {
    #[default]
    Error,
    UseFixed,
}

impl FromStr for EmptyMaskFallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "error" => Ok(Self::Error),
            "use_fixed" | "use-fixed" => Ok(Self::UseFixed),
            other => Err(format!(
                "unknown fallback `{other}` (expected error or use_fixed)"
            )),
        }
    }
}

pub const DEFAULT_FIXED_FRACTION: f64 = 2.0 / 3.0;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskStrategyConfig {
    pub kind: StrategyKind,
    /// Fraction of the frame height, counted from the bottom, that the
    /// fixed mask covers.
    pub fixed_fraction: f64,
    /// Regions need a score strictly greater than this.
    pub score_threshold: f64,
    pub dilation_radius: u32,
    pub fallback: EmptyMaskFallback,
    /// Keep only segmentation regions whose category equals the action noun.
    pub noun_filter: bool,
}

impl Default for MaskStrategyConfig {
    fn default() -> Self {
        Self::new(StrategyKind::Fixed)
    }
}

impl MaskStrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            fixed_fraction: DEFAULT_FIXED_FRACTION,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            dilation_radius: 0,
            fallback: EmptyMaskFallback::Error,
            noun_filter: false,
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if !(self.fixed_fraction > 0.0 && self.fixed_fraction <= 1.0) {
            return Err(StrategyError::InvalidConfig(format!(
                "fixed_fraction {} outside (0, 1]",
                self.fixed_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(StrategyError::InvalidConfig(format!(
                "score_threshold {} outside [0, 1]",
                self.score_threshold
            )));
        }
        Ok(())
    }
}

/// Rows `y >= floor(height * (1 - fraction))` are set.
pub fn fixed_mask(width: u32, height: u32, fraction: f64) -> Result<Mask, StrategyError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(StrategyError::InvalidConfig(format!(
            "fixed_fraction {fraction} outside (0, 1]"
        )));
    }
    let first_row = fixed_first_row(height, fraction);
    Ok(Mask::from_fn(width, height, |_, y| y >= first_row))
}

pub(crate) fn fixed_first_row(height: u32, fraction: f64) -> u32 {
    ((f64::from(height) * (1.0 - fraction)).floor() as u32).min(height)
}

/// Union of the boxes of every detection, hand or object, scoring strictly
/// above `threshold`.
pub fn hand_object_mask(
    detections: &[Detection],
    width: u32,
    height: u32,
    threshold: f64,
) -> Result<Mask, StrategyError> {
    let mut mask = Mask::empty(width, height);
    for det in detections.iter().filter(|d| d.score > threshold) {
        det.bbox.validate(width, height)?;
        for y in det.bbox.y_min..det.bbox.y_max {
            for x in det.bbox.x_min..det.bbox.x_max {
                mask.set(x, y, true);
            }
        }
    }
    non_empty(mask, StrategyKind::HandObject, threshold)
}

/// Union of every polygon of every region scoring strictly above
/// `threshold`. No category filtering: surrounding objects are masked too.
pub fn segmentation_mask(
    regions: &[SegmentationRegion],
    width: u32,
    height: u32,
    threshold: f64,
) -> Result<Mask, StrategyError> {
    let mut parts = Vec::new();
    for region in regions.iter().filter(|r| r.score > threshold) {
        for polygon in &region.polygons {
            parts.push(imaging::rasterize_polygon(polygon, width, height)?);
        }
    }
    let mask = if parts.is_empty() {
        Mask::empty(width, height)
    } else {
        imaging::union(&parts)?
    };
    non_empty(mask, StrategyKind::Segmentation, threshold)
}

fn non_empty(mask: Mask, kind: StrategyKind, threshold: f64) -> Result<Mask, StrategyError> {
    if mask.is_empty() {
        Err(StrategyError::EmptyMask { kind, threshold })
    } else {
        Ok(mask)
    }
}

/// Annotations available for one frame. `None` means the source was not
/// loaded at all, which is distinct from a frame with zero records.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskInputs<'a> {
    pub detections: Option<&'a [Detection]>,
    pub regions: Option<&'a [SegmentationRegion]>,
    /// The action noun, consulted only when `noun_filter` is on.
    pub noun: Option<&'a str>,
}

/// Dispatches to the configured strategy, applies the empty-mask fallback
/// policy, then dilates by `dilation_radius`.
pub fn build_mask(
    config: &MaskStrategyConfig,
    (width, height): (u32, u32),
    inputs: MaskInputs<'_>,
) -> Result<Mask, StrategyError> {
    config.validate()?;
    let raw = match config.kind {
        StrategyKind::Fixed => fixed_mask(width, height, config.fixed_fraction),
        StrategyKind::HandObject => {
            let dets = inputs.detections.ok_or(StrategyError::MissingAnnotations {
                kind: StrategyKind::HandObject,
            })?;
            hand_object_mask(dets, width, height, config.score_threshold)
        }
        StrategyKind::Segmentation => {
            let regions = inputs.regions.ok_or(StrategyError::MissingAnnotations {
                kind: StrategyKind::Segmentation,
            })?;
            if config.noun_filter {
                let noun = inputs.noun.unwrap_or_default();
                let kept: Vec<_> = regions
                    .iter()
                    .filter(|r| r.category.eq_ignore_ascii_case(noun))
                    .cloned()
                    .collect();
                segmentation_mask(&kept, width, height, config.score_threshold)
            } else {
                segmentation_mask(regions, width, height, config.score_threshold)
            }
        }
    };
    let mask = match raw {
        Err(StrategyError::EmptyMask { .. }) if config.fallback == EmptyMaskFallback::UseFixed => {
            fixed_mask(width, height, config.fixed_fraction)?
        }
        other => other?,
    };
    Ok(imaging::dilate(&mask, config.dilation_radius))
}
