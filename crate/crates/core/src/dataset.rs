//! Loaders for action annotations, pre-extracted frames, and the neutral
//! JSON intermediate format for hand/object detections and segmentation
//! regions.
//!
//! Detection and segmentation files hold one JSON document per video: a map
//! from frame index (as a string) to the records of that frame.
//!
//! ```json
//! { "100": [ {"kind": "hand", "box": [10, 20, 50, 60], "score": 0.93} ] }
//! { "100": [ {"category": "pot", "polygons": [[[1,1],[9,1],[9,9]]], "score": 0.8} ] }
//! ```
//!
//! Loaders never filter by score; thresholding belongs to the mask strategies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, BBox, Frame, ImagingError, Polygon};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path}: line {line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: frame {frame}, record {index}: {message}")]
    Record {
        path: PathBuf,
        frame: u64,
        index: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid action instance: {0}")]
    InvalidInstance(String),
    #[error("frame file not found; expected {expected}")]
    MissingFrame { expected: PathBuf },
    #[error("frames differ in size: start {start:?}, end {end:?}")]
    FrameSizeMismatch { start: (u32, u32), end: (u32, u32) },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// One annotated action segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionInstance {
    narration_id: String,
    participant_id: String,
    video_id: String,
    verb: String,
    noun: String,
    phrase: String,
    start_frame: u64,
    stop_frame: u64,
}

impl ActionInstance {
    pub fn new(
        narration_id: impl Into<String>,
        participant_id: impl Into<String>,
        video_id: impl Into<String>,
        verb: impl Into<String>,
        noun: impl Into<String>,
        start_frame: u64,
        stop_frame: u64,
    ) -> Result<Self, DatasetError> {
        let verb = verb.into().trim().to_string();
        let noun = noun.into().trim().to_string();
        let phrase = format!("{verb} {noun}").trim().to_string();
        if phrase.is_empty() {
            return Err(DatasetError::InvalidInstance("empty action phrase".into()));
        }
        if start_frame >= stop_frame {
            return Err(DatasetError::InvalidInstance(format!(
                "start_frame {start_frame} must precede stop_frame {stop_frame}"
            )));
        }
        Ok(Self {
            narration_id: narration_id.into(),
            participant_id: participant_id.into(),
            video_id: video_id.into(),
            verb,
            noun,
            phrase,
            start_frame,
            stop_frame,
        })
    }

    pub fn narration_id(&self) -> &str {
        &self.narration_id
    }
    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }
    pub fn video_id(&self) -> &str {
        &self.video_id
    }
    pub fn verb(&self) -> &str {
        &self.verb
    }
    pub fn noun(&self) -> &str {
        &self.noun
    }
    /// `verb + " " + noun`.
    pub fn phrase(&self) -> &str {
        &self.phrase
    }
    pub fn start_frame(&self) -> u64 {
        self.start_frame
    }
    pub fn stop_frame(&self) -> u64 {
        self.stop_frame
    }
}

const REQUIRED_COLUMNS: [&str; 7] = [
    "narration_id",
    "participant_id",
    "video_id",
    "start_frame",
    "stop_frame",
    "verb",
    "noun",
];

/// Reads a comma-separated annotation file with a header row. Extra columns
/// are ignored and row order is preserved.
pub fn load_actions(path: &Path) -> Result<Vec<ActionInstance>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut idx = [0usize; REQUIRED_COLUMNS.len()];
    for (slot, column) in idx.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| DatasetError::MissingColumn {
                path: path.to_path_buf(),
                column,
            })?;
    }
    let [narration, participant, video, start, stop, verb, noun] = idx;

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let frame = |i: usize, name: &str| {
            field(i).parse::<u64>().map_err(|_| DatasetError::Row {
                path: path.to_path_buf(),
                line,
                message: format!("malformed {name} `{}`", field(i)),
            })
        };
        let instance = ActionInstance::new(
            field(narration),
            field(participant),
            field(video),
            field(verb),
            field(noun),
            frame(start, "start_frame")?,
            frame(stop, "stop_frame")?,
        )
        .map_err(|e| DatasetError::Row {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        out.push(instance);
    }
    Ok(out)
}

fn csv_error(path: &Path, err: csv::Error) -> DatasetError {
    match err.into_kind() {
        csv::ErrorKind::Io(source) => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => DatasetError::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKind {
    Hand,
    Object,
}

/// A scored box for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_index: u64,
    pub kind: DetectionKind,
    pub bbox: BBox,
    pub score: f64,
}

/// A scored, possibly multi-part, outline for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationRegion {
    pub frame_index: u64,
    pub category: String,
    pub polygons: Vec<Polygon>,
    pub score: f64,
}

#[derive(Deserialize)]
struct RawDetection {
    kind: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    score: f64,
}

#[derive(Deserialize)]
struct RawRegion {
    category: String,
    polygons: Vec<Vec<[f64; 2]>>,
    score: f64,
}

/// A parsed per-video annotation document, keyed by frame index.
#[derive(Debug)]
pub struct AnnotationFile<R> {
    path: PathBuf,
    frames: BTreeMap<u64, Vec<R>>,
}

impl<R: serde::de::DeserializeOwned> AnnotationFile<R> {
    fn open(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let raw: BTreeMap<String, Vec<R>> =
            serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let mut frames = BTreeMap::new();
        for (key, records) in raw {
            let index = key.trim().parse::<u64>().map_err(|_| DatasetError::Parse {
                path: path.to_path_buf(),
                message: format!("frame key `{key}` is not an index"),
            })?;
            frames.insert(index, records);
        }
        Ok(Self {
            path: path.to_path_buf(),
            frames,
        })
    }

    fn records(&self, frame: u64) -> &[R] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    fn record_error(&self, frame: u64, index: usize, message: String) -> DatasetError {
        DatasetError::Record {
            path: self.path.clone(),
            frame,
            index,
            message,
        }
    }
}

/// Detections for every frame of one video.
pub struct DetectionFile(AnnotationFile<RawDetection>);

impl DetectionFile {
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        AnnotationFile::open(path).map(Self)
    }

    /// All detections recorded for `frame`; an absent frame yields none.
    pub fn detections(&self, frame: u64) -> Result<Vec<Detection>, DatasetError> {
        let file = &self.0;
        file.records(frame)
            .iter()
            .enumerate()
            .map(|(i, raw)| {
                let kind = match raw.kind.as_str() {
                    "hand" => DetectionKind::Hand,
                    "object" => DetectionKind::Object,
                    other => {
                        return Err(file.record_error(frame, i, format!("unknown kind `{other}`")))
                    }
                };
                check_score(raw.score).map_err(|m| file.record_error(frame, i, m))?;
                let bbox = pixel_box(raw.bbox).map_err(|m| file.record_error(frame, i, m))?;
                Ok(Detection {
                    frame_index: frame,
                    kind,
                    bbox,
                    score: raw.score,
                })
            })
            .collect()
    }
}

/// Segmentation regions for every frame of one video.
pub struct SegmentationFile(AnnotationFile<RawRegion>);

impl SegmentationFile {
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        AnnotationFile::open(path).map(Self)
    }

    pub fn regions(&self, frame: u64) -> Result<Vec<SegmentationRegion>, DatasetError> {
        let file = &self.0;
        file.records(frame)
            .iter()
            .enumerate()
            .map(|(i, raw)| {
                check_score(raw.score).map_err(|m| file.record_error(frame, i, m))?;
                if raw.polygons.is_empty() {
                    return Err(file.record_error(frame, i, "region has no polygons".into()));
                }
                let polygons = raw
                    .polygons
                    .iter()
                    .map(|pts| Polygon::new(pts.iter().map(|&[x, y]| (x, y)).collect()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| file.record_error(frame, i, e.to_string()))?;
                Ok(SegmentationRegion {
                    frame_index: frame,
                    category: raw.category.clone(),
                    polygons,
                    score: raw.score,
                })
            })
            .collect()
    }
}

pub fn load_detections(path: &Path, frame_index: u64) -> Result<Vec<Detection>, DatasetError> {
    DetectionFile::open(path)?.detections(frame_index)
}

pub fn load_segmentations(
    path: &Path,
    frame_index: u64,
) -> Result<Vec<SegmentationRegion>, DatasetError> {
    SegmentationFile::open(path)?.regions(frame_index)
}

fn check_score(score: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(format!("score {score} outside [0, 1]"))
    }
}

// Fractional coordinates widen outward to whole pixels.
fn pixel_box([x0, y0, x1, y1]: [f64; 4]) -> Result<BBox, String> {
    if [x0, y0, x1, y1].iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(format!(
            "box {:?} has negative or non-finite coordinates",
            [x0, y0, x1, y1]
        ));
    }
    let bbox = BBox::new(
        x0.floor() as u32,
        y0.floor() as u32,
        x1.ceil() as u32,
        y1.ceil() as u32,
    );
    if bbox.x_min >= bbox.x_max || bbox.y_min >= bbox.y_max {
        return Err(format!("degenerate box {:?}", [x0, y0, x1, y1]));
    }
    Ok(bbox)
}

/// Start frame plus the ground-truth end frame, shown beside predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    start: Frame,
    end_truth: Frame,
}

impl FramePair {
    pub fn new(start: Frame, end_truth: Frame) -> Result<Self, DatasetError> {
        if start.dims() != end_truth.dims() {
            return Err(DatasetError::FrameSizeMismatch {
                start: start.dims(),
                end: end_truth.dims(),
            });
        }
        Ok(Self { start, end_truth })
    }

    pub fn start(&self) -> &Frame {
        &self.start
    }

    pub fn end_truth(&self) -> &Frame {
        &self.end_truth
    }
}

/// How frame files are named under `frames_dir/<video_id>/`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameLayout {
    pub prefix: String,
    pub pad_width: usize,
    pub extensions: Vec<String>,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            prefix: "frame_".into(),
            pad_width: 10,
            extensions: vec!["jpg".into(), "png".into(), "jpeg".into()],
        }
    }
}

impl FrameLayout {
    /// Candidate paths for a frame, in lookup order.
    pub fn candidates(&self, frames_dir: &Path, video_id: &str, index: u64) -> Vec<PathBuf> {
        let stem = format!("{}{:0width$}", self.prefix, index, width = self.pad_width);
        self.extensions
            .iter()
            .map(|ext| frames_dir.join(video_id).join(format!("{stem}.{ext}")))
            .collect()
    }

    pub fn resolve(
        &self,
        frames_dir: &Path,
        video_id: &str,
        index: u64,
    ) -> Result<PathBuf, DatasetError> {
        let candidates = self.candidates(frames_dir, video_id, index);
        candidates
            .iter()
            .find(|p| p.is_file())
            .cloned()
            .ok_or_else(|| DatasetError::MissingFrame {
                expected: candidates.into_iter().next().unwrap_or_default(),
            })
    }
}

/// Loads the first and last frames of the annotated segment.
pub fn select_frame_pair(
    instance: &ActionInstance,
    frames_dir: &Path,
    layout: &FrameLayout,
) -> Result<FramePair, DatasetError> {
    let load = |index| -> Result<Frame, DatasetError> {
        let path = layout.resolve(frames_dir, instance.video_id(), index)?;
        Ok(imaging::read_frame(&path)?)
    };
    FramePair::new(load(instance.start_frame())?, load(instance.stop_frame())?)
}
