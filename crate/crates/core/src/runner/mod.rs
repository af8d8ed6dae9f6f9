//! Runs the mask-strategy x prompt-mode matrix over selected action
//! instances, writes every artifact, and records a manifest.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! frames/<narration>/{start,end}.png         64x64 start and ground-truth end frames
//! masks/<narration>/<strategy>.png           64x64 masks
//! prompts/<narration>/<mode>.txt             backend prompts
//! outputs/<narration>/<strategy>__<mode>.png 64x64 predictions
//! sheets/<narration>.png                     contact sheets
//! cache/<xx>/<sha256>.png                    content-addressed backend outputs
//! manifest.json
//! ```

mod cache;
mod config;
mod font;
mod manifest;
mod sheet;

pub use cache::{cache_key, CacheEntryMeta, OutputCache};
pub use config::{
    BackendConfig, CompletionConfig, DatasetPaths, InstanceFilter, PromptOptions, RunConfig,
};
pub use manifest::{CellRecord, InstanceRecord, RunManifest, MANIFEST_FILE};
pub use sheet::{
    contact_sheet, mask_overlay, sheet_dims, SheetColumn, SheetInput, CELL, GUTTER, LABEL_H,
};

use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::backend::{
    BackendError, GlideAdapter, InpaintBackend, InpaintRequest, MockBackend, BACKEND_SIZE,
};
use crate::dataset::{
    self, ActionInstance, DatasetError, Detection, DetectionFile, FramePair, SegmentationFile,
    SegmentationRegion,
};
use crate::imaging::{self, Frame, ImagingError, Mask};
use crate::prompts::{
    self, ActionEffectPair, ClientDescriptor, CompletionClient, CompletionError, CompletionRequest,
    PromptError, PromptMode, PromptSpec, RemoteCompletionClient, ScriptedClient,
};
use crate::strategy::{self, MaskInputs, StrategyKind};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Short row label used on contact sheets.
pub fn mode_label(mode: PromptMode) -> &'static str {
    match mode {
        PromptMode::ActionPhrase => "PHRASE",
        PromptMode::EffectDescription => "EFFECT",
    }
}

/// Makes a narration id safe to use as a path component.
pub fn path_component(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Builds the backend and completion client a config names.
pub fn build_backend(config: &BackendConfig) -> Arc<dyn InpaintBackend> {
    match config {
        BackendConfig::Mock => Arc::new(MockBackend::new()),
        BackendConfig::Adapter(cfg) => Arc::new(GlideAdapter::new(cfg.clone())),
    }
}

pub fn build_completion(
    config: Option<&CompletionConfig>,
) -> Result<Option<Arc<dyn CompletionClient>>, RunError> {
    Ok(match config {
        None => None,
        Some(CompletionConfig::Scripted { table }) => {
            Some(Arc::new(ScriptedClient::from_json_file(table)?))
        }
        Some(CompletionConfig::Remote(cfg)) => {
            Some(Arc::new(RemoteCompletionClient::new(cfg.clone())?))
        }
    })
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.freed.notify_one();
    }
}

fn with_retries<T, E>(
    retries: u32,
    retryable: impl Fn(&E) -> bool,
    mut attempt: impl FnMut() -> Result<T, E>,
) -> Result<T, E> {
    let mut tries = 0;
    loop {
        match attempt() {
            Err(e) if tries < retries && retryable(&e) => {
                tries += 1;
                log::warn!("retryable failure, attempt {tries} of {retries}");
                std::thread::sleep(Duration::from_millis(100 * u64::from(tries)));
            }
            other => return other,
        }
    }
}

// Completion client wrapper honouring the descriptor's concurrency cap and
// the run's retry budget.
struct Throttled<'a> {
    inner: &'a dyn CompletionClient,
    gate: &'a Semaphore,
    retries: u32,
}

impl CompletionClient for Throttled<'_> {
    fn descriptor(&self) -> ClientDescriptor {
        self.inner.descriptor()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, CompletionError> {
        with_retries(self.retries, CompletionError::is_retryable, || {
            let _permit = self.gate.acquire();
            self.inner.complete(request)
        })
    }
}

struct PreparedMask {
    mask: Mask,
    file: String,
    coverage: f64,
}

struct Prepared {
    instance: ActionInstance,
    record: InstanceRecord,
    frames: Option<FramePair>,
    masks: Vec<Result<PreparedMask, String>>,
    prompts: Vec<Result<String, String>>,
}

struct CellOutcome {
    record: CellRecord,
    output: Option<Frame>,
}

pub struct Runner {
    config: RunConfig,
    backend: Arc<dyn InpaintBackend>,
    completion: Option<Arc<dyn CompletionClient>>,
}

impl Runner {
    /// Instantiates the backend and completion client the config names.
    pub fn from_config(config: RunConfig) -> Result<Self, RunError> {
        let backend = build_backend(&config.backend);
        let completion = build_completion(config.completion.as_ref())?;
        Ok(Self::with_clients(config, backend, completion))
    }

    /// Uses caller-supplied clients, ignoring the config's backend and
    /// completion sections.
    pub fn with_clients(
        config: RunConfig,
        backend: Arc<dyn InpaintBackend>,
        completion: Option<Arc<dyn CompletionClient>>,
    ) -> Self {
        Self {
            config,
            backend,
            completion,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn run(&self) -> Result<RunManifest, RunError> {
        let config = &self.config;
        config.validate()?;
        if config.prompt_modes.contains(&PromptMode::EffectDescription) && self.completion.is_none()
        {
            return Err(RunError::Config(
                "effect_description prompts need a completion client".into(),
            ));
        }
        let started_at = timestamp();

        let instances: Vec<ActionInstance> = dataset::load_actions(&config.dataset.actions)?
            .into_iter()
            .filter(|i| config.filter.accepts(i))
            .collect();
        let pairs = match (
            &config.dataset.pairs,
            config.prompt_modes.contains(&PromptMode::EffectDescription),
        ) {
            (Some(path), true) => prompts::load_pairs(path)?,
            _ => Vec::new(),
        };
        if config.prompt_modes.contains(&PromptMode::EffectDescription)
            && pairs.len() < config.prompt.exemplar_count
        {
            return Err(PromptError::InsufficientExemplars {
                requested: config.prompt.exemplar_count,
                available: pairs.len(),
            }
            .into());
        }
        std::fs::create_dir_all(&config.output_dir).map_err(|source| RunError::Io {
            path: config.output_dir.clone(),
            source,
        })?;
        let cache = OutputCache::new(config.cache_dir());
        let labels = config.strategy_labels();
        let backend_desc = self.backend.descriptor();
        let backend_gate = Semaphore::new(backend_desc.max_concurrency);
        let completion_desc = self.completion.as_ref().map(|c| c.descriptor());
        let completion_gate =
            Semaphore::new(completion_desc.as_ref().map_or(1, |d| d.max_concurrency));

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| RunError::Config(format!("worker pool: {e}")))?;

        let (prepared, outcomes) = pool.install(|| {
            let prepared: Vec<Prepared> = instances
                .par_iter()
                .map(|inst| self.prepare(inst, &labels, &pairs, &completion_gate))
                .collect();

            let jobs: Vec<(usize, usize, usize)> = (0..prepared.len())
                .flat_map(|i| {
                    (0..labels.len())
                        .flat_map(move |s| (0..config.prompt_modes.len()).map(move |m| (i, s, m)))
                })
                .collect();
            let outcomes: Vec<CellOutcome> = jobs
                .par_iter()
                .map(|&(i, s, m)| {
                    self.run_cell(
                        &prepared[i],
                        s,
                        m,
                        &labels,
                        &cache,
                        &backend_desc.id,
                        &backend_gate,
                    )
                })
                .collect();
            (prepared, outcomes)
        });

        let mut instance_records = Vec::with_capacity(prepared.len());
        let per_instance = labels.len() * config.prompt_modes.len();
        for (i, prep) in prepared.iter().enumerate() {
            let mut record = prep.record.clone();
            if let Some(frames) = &prep.frames {
                let cells = &outcomes[i * per_instance..(i + 1) * per_instance];
                let input = self.sheet_input(frames.clone(), prep, cells, &labels);
                let rel = format!(
                    "sheets/{}.png",
                    path_component(prep.instance.narration_id())
                );
                self.write_frame(&rel, &contact_sheet(&input))?;
                record.sheet_file = Some(rel);
            }
            instance_records.push(record);
        }

        let mut manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            finished_at: String::new(),
            config: config.clone(),
            backend: backend_desc,
            completion: completion_desc,
            strategies: labels,
            prompt_modes: config.prompt_modes.clone(),
            instances: instance_records,
            cells: outcomes.into_iter().map(|o| o.record).collect(),
        };
        manifest.sort_canonical();
        manifest.finished_at = timestamp();
        manifest.write(&config.output_dir.join(MANIFEST_FILE))?;
        Ok(manifest)
    }

    fn prepare(
        &self,
        instance: &ActionInstance,
        labels: &[String],
        pairs: &[ActionEffectPair],
        completion_gate: &Semaphore,
    ) -> Prepared {
        let config = &self.config;
        let nid = path_component(instance.narration_id());
        let mut record = InstanceRecord {
            narration_id: instance.narration_id().to_string(),
            video_id: instance.video_id().to_string(),
            phrase: instance.phrase().to_string(),
            start_frame: instance.start_frame(),
            stop_frame: instance.stop_frame(),
            start_file: None,
            end_file: None,
            sheet_file: None,
            error: None,
        };

        let source = dataset::select_frame_pair(
            instance,
            &config.dataset.frames_dir,
            &config.dataset.frame_layout,
        );
        let (source, frames) = match source.and_then(|pair| {
            let start = imaging::resize_frame(pair.start(), BACKEND_SIZE, BACKEND_SIZE)?;
            let end = imaging::resize_frame(pair.end_truth(), BACKEND_SIZE, BACKEND_SIZE)?;
            Ok((pair, FramePair::new(start, end)?))
        }) {
            Ok((source, small)) => {
                let start_rel = format!("frames/{nid}/start.png");
                let end_rel = format!("frames/{nid}/end.png");
                match self
                    .write_frame(&start_rel, small.start())
                    .and_then(|()| self.write_frame(&end_rel, small.end_truth()))
                {
                    Ok(()) => {
                        record.start_file = Some(start_rel);
                        record.end_file = Some(end_rel);
                        (Ok(source), Some(small))
                    }
                    Err(e) => (Err(e.to_string()), None),
                }
            }
            Err(e) => (Err(format!("frames: {e}")), None),
        };
        if let Err(e) = &source {
            record.error = Some(e.clone());
        }

        let detections = self.annotations_for(instance, StrategyKind::HandObject);
        let regions = self.annotations_for(instance, StrategyKind::Segmentation);
        let masks = config
            .strategies
            .iter()
            .zip(labels)
            .map(|(strategy, label)| {
                let source = source.as_ref().map_err(Clone::clone)?;
                let inputs = MaskInputs {
                    detections: match (&detections, strategy.kind) {
                        (Annotations::Detections(Err(e)), StrategyKind::HandObject) => {
                            return Err(format!("detections: {e}"))
                        }
                        (Annotations::Detections(Ok(d)), _) => Some(d.as_slice()),
                        _ => None,
                    },
                    regions: match (&regions, strategy.kind) {
                        (Annotations::Regions(Err(e)), StrategyKind::Segmentation) => {
                            return Err(format!("segmentations: {e}"))
                        }
                        (Annotations::Regions(Ok(r)), _) => Some(r.as_slice()),
                        _ => None,
                    },
                    noun: Some(instance.noun()),
                };
                let full = strategy::build_mask(strategy, source.start().dims(), inputs)
                    .map_err(|e| format!("mask: {e}"))?;
                let mask = imaging::downsample_mask(&full, BACKEND_SIZE, BACKEND_SIZE)
                    .map_err(|e| format!("mask: {e}"))?;
                let file = format!("masks/{nid}/{label}.png");
                self.write_mask(&file, &mask).map_err(|e| e.to_string())?;
                Ok(PreparedMask {
                    coverage: imaging::coverage(&mask),
                    mask,
                    file,
                })
            })
            .collect();

        let client = self.completion.as_deref().map(|inner| Throttled {
            inner,
            gate: completion_gate,
            retries: config.retries,
        });
        let spec = PromptSpec {
            mode: PromptMode::EffectDescription,
            exemplar_count: config.prompt.exemplar_count,
            seed: config.seed,
            max_tokens: config.prompt.max_tokens,
            temperature: config.prompt.temperature,
        };
        let prompts = config
            .prompt_modes
            .iter()
            .map(|&mode| {
                let text = prompts::make_prompt(
                    instance,
                    mode,
                    client.as_ref().map(|c| c as &dyn CompletionClient),
                    pairs,
                    &spec,
                )
                .map_err(|e| format!("prompt: {e}"))?;
                let rel = format!("prompts/{nid}/{mode}.txt");
                self.write_bytes(&rel, format!("{text}\n").as_bytes())
                    .map_err(|e| e.to_string())?;
                Ok(text)
            })
            .collect();

        Prepared {
            instance: instance.clone(),
            record,
            frames,
            masks,
            prompts,
        }
    }

    fn annotations_for(&self, instance: &ActionInstance, kind: StrategyKind) -> Annotations {
        if !self.config.strategies.iter().any(|s| s.kind == kind) {
            return Annotations::NotNeeded;
        }
        let file = format!("{}.json", instance.video_id());
        let frame = instance.start_frame();
        match kind {
            StrategyKind::HandObject => {
                let dir = self
                    .config
                    .dataset
                    .detections
                    .as_deref()
                    .unwrap_or(Path::new(""));
                Annotations::Detections(
                    DetectionFile::open(&dir.join(file))
                        .and_then(|f| f.detections(frame))
                        .map_err(|e| e.to_string()),
                )
            }
            StrategyKind::Segmentation => {
                let dir = self
                    .config
                    .dataset
                    .segmentations
                    .as_deref()
                    .unwrap_or(Path::new(""));
                Annotations::Regions(
                    SegmentationFile::open(&dir.join(file))
                        .and_then(|f| f.regions(frame))
                        .map_err(|e| e.to_string()),
                )
            }
            StrategyKind::Fixed => Annotations::NotNeeded,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run_cell(
        &self,
        prep: &Prepared,
        s: usize,
        m: usize,
        labels: &[String],
        cache: &OutputCache,
        backend_id: &str,
        gate: &Semaphore,
    ) -> CellOutcome {
        let mode = self.config.prompt_modes[m];
        let label = &labels[s];
        let mask = prep.masks[s].as_ref();
        let prompt = prep.prompts[m].as_ref();
        let mut record = CellRecord {
            narration_id: prep.instance.narration_id().to_string(),
            strategy: label.clone(),
            strategy_kind: self.config.strategies[s].kind,
            prompt_mode: mode,
            prompt: prompt.ok().cloned(),
            mask_file: mask.ok().map(|pm| pm.file.clone()),
            mask_coverage: mask.ok().map(|pm| pm.coverage),
            output_file: None,
            cache_key: None,
            backend_id: backend_id.to_string(),
            elapsed_ms: None,
            error: None,
        };

        let result = (|| -> Result<Frame, String> {
            let mask = mask.map_err(Clone::clone)?;
            let prompt = prompt.map_err(Clone::clone)?;
            let frames = prep.frames.as_ref().ok_or("frames unavailable")?;
            let request = InpaintRequest::new(
                frames.start().clone(),
                mask.mask.clone(),
                prompt.clone(),
                self.config.seed,
            )
            .map_err(|e| format!("backend: {e}"))?;
            let key = cache_key(&request, backend_id);
            record.cache_key = Some(key.clone());

            let (frame, elapsed) = match cache.get(&key) {
                Some((frame, meta)) => (frame, meta.elapsed_ms),
                None => {
                    let result =
                        with_retries(self.config.retries, BackendError::is_retryable, || {
                            let _permit = gate.acquire();
                            self.backend.inpaint(&request)
                        })
                        .map_err(|e| format!("backend: {e}"))?;
                    if result.frame.dims() != request.frame().dims() {
                        return Err(format!(
                            "backend: output is {:?}, expected {:?}",
                            result.frame.dims(),
                            request.frame().dims()
                        ));
                    }
                    let meta = CacheEntryMeta {
                        backend_id: result.backend_id.clone(),
                        elapsed_ms: result.elapsed_ms,
                        meta: result.meta.clone(),
                    };
                    cache
                        .put(&key, &result.frame, &meta)
                        .map_err(|e| format!("cache: {e}"))?;
                    (result.frame, result.elapsed_ms)
                }
            };
            record.elapsed_ms = Some(elapsed);
            let rel = format!(
                "outputs/{}/{label}__{mode}.png",
                path_component(prep.instance.narration_id())
            );
            self.write_frame(&rel, &frame).map_err(|e| e.to_string())?;
            record.output_file = Some(rel);
            Ok(frame)
        })();

        match result {
            Ok(frame) => CellOutcome {
                record,
                output: Some(frame),
            },
            Err(e) => {
                log::warn!(
                    "cell {} / {} / {} failed: {e}",
                    record.narration_id,
                    record.strategy,
                    record.prompt_mode
                );
                record.error = Some(e);
                CellOutcome {
                    record,
                    output: None,
                }
            }
        }
    }

    fn sheet_input(
        &self,
        frames: FramePair,
        prep: &Prepared,
        cells: &[CellOutcome],
        labels: &[String],
    ) -> SheetInput {
        let modes = self.config.prompt_modes.len();
        SheetInput {
            frames,
            modes: self
                .config
                .prompt_modes
                .iter()
                .map(|&m| mode_label(m).to_string())
                .collect(),
            columns: labels
                .iter()
                .enumerate()
                .map(|(s, label)| SheetColumn {
                    label: label.to_uppercase(),
                    mask: prep.masks[s].as_ref().ok().map(|pm| pm.mask.clone()),
                    outputs: (0..modes)
                        .map(|m| cells[s * modes + m].output.clone())
                        .collect(),
                })
                .collect(),
        }
    }

    fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.config.output_dir.join(rel);
        cache::write_atomic(&path, bytes).map_err(|source| RunError::Io { path, source })
    }

    fn write_frame(&self, rel: &str, frame: &Frame) -> Result<(), RunError> {
        self.write_bytes(rel, &imaging::encode_frame_png(frame)?)
    }

    fn write_mask(&self, rel: &str, mask: &Mask) -> Result<(), RunError> {
        self.write_bytes(rel, &imaging::encode_mask_png(mask)?)
    }
}

enum Annotations {
    NotNeeded,
    Detections(Result<Vec<Detection>, String>),
    Regions(Result<Vec<SegmentationRegion>, String>),
}

/// Runs `config` with the backend and completion client it names.
pub fn run(config: &RunConfig) -> Result<RunManifest, RunError> {
    Runner::from_config(config.clone())?.run()
}

/// Rebuilds one instance's contact sheet from a manifest and the artifacts
/// beside it.
pub fn sheet_from_manifest(
    manifest: &RunManifest,
    base_dir: &Path,
    narration_id: &str,
) -> Result<Frame, RunError> {
    let instance = manifest
        .instances
        .iter()
        .find(|i| i.narration_id == narration_id)
        .ok_or_else(|| RunError::Config(format!("no instance `{narration_id}` in manifest")))?;
    let (Some(start), Some(end)) = (&instance.start_file, &instance.end_file) else {
        return Err(RunError::Config(format!(
            "instance `{narration_id}` has no frames: {}",
            instance.error.as_deref().unwrap_or("unknown error")
        )));
    };
    let frames = FramePair::new(
        imaging::read_frame(&base_dir.join(start))?,
        imaging::read_frame(&base_dir.join(end))?,
    )?;
    let cells: Vec<&CellRecord> = manifest.cells_for(narration_id).collect();
    let find = |strategy: &str, mode: PromptMode| {
        cells
            .iter()
            .find(|c| c.strategy == strategy && c.prompt_mode == mode)
            .copied()
    };
    let mut columns = Vec::with_capacity(manifest.strategies.len());
    for label in &manifest.strategies {
        let mask = match cells
            .iter()
            .find(|c| &c.strategy == label)
            .and_then(|c| c.mask_file.as_ref())
        {
            Some(f) => Some(imaging::read_mask(&base_dir.join(f))?),
            None => None,
        };
        let mut outputs = Vec::with_capacity(manifest.prompt_modes.len());
        for &mode in &manifest.prompt_modes {
            outputs.push(
                match find(label, mode).and_then(|c| c.output_file.as_ref()) {
                    Some(f) => Some(imaging::read_frame(&base_dir.join(f))?),
                    None => None,
                },
            );
        }
        columns.push(SheetColumn {
            label: label.to_uppercase(),
            mask,
            outputs,
        });
    }
    Ok(contact_sheet(&SheetInput {
        frames,
        modes: manifest
            .prompt_modes
            .iter()
            .map(|&m| mode_label(m).to_string())
            .collect(),
        columns,
    }))
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
