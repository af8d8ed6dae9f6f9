//! `effectcast`: run action-effect inpainting experiments.
//!
//! Exit codes: 0 success, 1 configuration or load error, 2 the run completed
//! but at least one cell failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use effectcast_core::backend::GlideAdapterConfig;
use effectcast_core::dataset::{load_detections, load_segmentations, FrameLayout};
use effectcast_core::imaging::{downsample_mask, read_frame, write_frame_png, write_mask_png};
use effectcast_core::prompts::{
    build_fewshot_prompt, exemplar_seed, load_pairs, make_prompt, CompletionClient,
    RemoteClientConfig, RemoteCompletionClient,
};
use effectcast_core::runner::{
    sheet_from_manifest, BackendConfig, CompletionConfig, DatasetPaths, MANIFEST_FILE,
};
use effectcast_core::strategy::{build_mask, EmptyMaskFallback, MaskInputs};
use effectcast_core::{
    ActionInstance, MaskStrategyConfig, PromptMode, PromptSpec, RunConfig, RunManifest, Runner,
    ScriptedClient, StrategyKind, BACKEND_SIZE,
};

#[derive(Parser)]
#[command(
    name = "effectcast",
    version,
    about = "Predict action effects by text-guided inpainting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strategy x prompt-mode matrix over a dataset.
    Run(Box<RunArgs>),
    /// Build one mask from a frame and its annotations.
    Mask(MaskArgs),
    /// Produce the backend prompt for one action phrase.
    Prompt(PromptArgs),
    /// Re-render a contact sheet from a run manifest.
    Sheet(SheetArgs),
}

#[derive(Args, Default)]
struct StrategyKnobs {
    /// Detection/segmentation score threshold (strictly greater passes).
    #[arg(long)]
    threshold: Option<f64>,
    /// Fraction of the frame height covered by the fixed mask.
    #[arg(long)]
    fixed_fraction: Option<f64>,
    /// Chebyshev dilation radius in source pixels.
    #[arg(long)]
    dilation: Option<u32>,
    /// Empty-mask policy: error or use_fixed.
    #[arg(long)]
    fallback: Option<EmptyMaskFallback>,
    /// Keep only segmentation regions whose category is the action noun.
    #[arg(long)]
    noun_filter: Option<bool>,
}

impl StrategyKnobs {
    fn apply(&self, s: &mut MaskStrategyConfig) {
        if let Some(t) = self.threshold {
            s.score_threshold = t;
        }
        if let Some(f) = self.fixed_fraction {
            s.fixed_fraction = f;
        }
        if let Some(r) = self.dilation {
            s.dilation_radius = r;
        }
        if let Some(f) = self.fallback {
            s.fallback = f;
        }
        if let Some(n) = self.noun_filter {
            s.noun_filter = n;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["mock", "adapter"])]
    backend: Option<String>,
    /// Inpainting service URL for the adapter backend.
    #[arg(long)]
    adapter_url: Option<String>,
    #[arg(long)]
    adapter_steps: Option<u32>,
    #[arg(long)]
    adapter_guidance_scale: Option<f64>,
    #[arg(long)]
    adapter_timeout: Option<u64>,
    #[arg(long)]
    adapter_concurrency: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    actions: Option<PathBuf>,
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    #[arg(long)]
    frame_extension: Vec<String>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    segmentations: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Comma-separated strategy kinds.
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<StrategyKind>,
    /// Comma-separated prompt modes.
    #[arg(long, value_delimiter = ',')]
    prompt_modes: Vec<PromptMode>,
    #[arg(long)]
    exemplars: Option<usize>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Restrict to these narration ids (repeatable).
    #[arg(long)]
    narration: Vec<String>,
    #[arg(long)]
    verb: Option<String>,
    #[arg(long)]
    noun: Option<String>,
    /// JSON table of scripted completions keyed by action phrase.
    #[arg(long, conflicts_with = "completion_endpoint")]
    completion_table: Option<PathBuf>,
    #[command(flatten)]
    remote: RemoteArgs,
    #[command(flatten)]
    knobs: StrategyKnobs,
}

#[derive(Args, Default)]
struct RemoteArgs {
    /// Completions endpoint of a hosted language model.
    #[arg(long, requires = "completion_model")]
    completion_endpoint: Option<String>,
    #[arg(long)]
    completion_model: Option<String>,
    /// Environment variable holding the completion API key.
    #[arg(long, default_value = "EFFECTCAST_API_KEY")]
    completion_key_env: String,
}

impl RemoteArgs {
    fn config(&self) -> Option<RemoteClientConfig> {
        let endpoint = self.completion_endpoint.clone()?;
        Some(RemoteClientConfig {
            endpoint,
            model: self.completion_model.clone().unwrap_or_default(),
            credential_env: self.completion_key_env.clone(),
            max_concurrency: 4,
            timeout_secs: 60,
            debug: false,
        })
    }
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    strategy: StrategyKind,
    /// Start frame; only its dimensions are used.
    #[arg(long)]
    frame: PathBuf,
    /// Per-video detections document.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Per-video segmentations document.
    #[arg(long)]
    segmentations: Option<PathBuf>,
    /// Frame key to read from the annotation documents.
    #[arg(long, default_value_t = 0)]
    frame_index: u64,
    /// Action noun for --noun-filter.
    #[arg(long)]
    noun: Option<String>,
    /// Reduce the mask to the backend resolution before writing.
    #[arg(long)]
    downsample: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    knobs: StrategyKnobs,
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long)]
    mode: PromptMode,
    /// Action phrase, verb first.
    #[arg(long)]
    action: String,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Narration id mixed into the exemplar seed, as `run` does.
    #[arg(long)]
    narration: Option<String>,
    #[arg(long, default_value_t = 2)]
    exemplars: usize,
    #[arg(long, default_value_t = 48)]
    max_tokens: u32,
    #[arg(long, conflicts_with = "completion_endpoint")]
    completion_table: Option<PathBuf>,
    #[command(flatten)]
    remote: RemoteArgs,
    /// Print the few-shot prompt instead of completing it.
    #[arg(long)]
    show_fewshot: bool,
}

#[derive(Args)]
struct SheetArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    narration: String,
    #[arg(long)]
    out: PathBuf,
}

enum Outcome {
    Done,
    CellErrors(usize),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Mask(args) => cmd_mask(args).map(|()| Outcome::Done),
        Command::Prompt(args) => cmd_prompt(args).map(|()| Outcome::Done),
        Command::Sheet(args) => cmd_sheet(args).map(|()| Outcome::Done),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::CellErrors(n)) => {
            eprintln!("effectcast: {n} cell(s) failed; see the manifest for details");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("effectcast: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn cmd_run(args: RunArgs) -> Result<Outcome> {
    let config = build_run_config(&args)?;
    if config.output_dir.as_os_str().is_empty() {
        bail!("no output directory: pass --output or set output_dir");
    }
    config.validate()?;
    let runner = Runner::from_config(config)?;
    let manifest = runner.run()?;
    let path = runner.config().output_dir.join(MANIFEST_FILE);
    let errors = manifest.error_count();
    println!(
        "{} instance(s), {} cell(s), {errors} error(s); manifest at {}",
        manifest.instances.len(),
        manifest.cells.len(),
        path.display()
    );
    Ok(if errors == 0 {
        Outcome::Done
    } else {
        Outcome::CellErrors(errors)
    })
}

fn build_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => {
            let actions = args
                .actions
                .clone()
                .ok_or_else(|| anyhow!("pass --config or --actions and --frames-dir"))?;
            let frames_dir = args
                .frames_dir
                .clone()
                .ok_or_else(|| anyhow!("pass --config or --actions and --frames-dir"))?;
            RunConfig::new(
                DatasetPaths {
                    actions,
                    frames_dir,
                    detections: None,
                    segmentations: None,
                    pairs: None,
                    frame_layout: FrameLayout::default(),
                },
                args.output.clone().unwrap_or_default(),
            )
        }
    };

    let ds = &mut config.dataset;
    override_with(&mut ds.actions, &args.actions);
    override_with(&mut ds.frames_dir, &args.frames_dir);
    if !args.frame_extension.is_empty() {
        ds.frame_layout.extensions = args.frame_extension.clone();
    }
    override_opt(&mut ds.detections, &args.detections);
    override_opt(&mut ds.segmentations, &args.segmentations);
    override_opt(&mut ds.pairs, &args.pairs);
    override_with(&mut config.output_dir, &args.output);
    override_opt(&mut config.cache_dir, &args.cache_dir);
    override_with(&mut config.seed, &args.seed);
    override_with(&mut config.parallelism, &args.parallelism);
    override_with(&mut config.retries, &args.retries);
    override_with(&mut config.prompt.exemplar_count, &args.exemplars);
    override_with(&mut config.prompt.max_tokens, &args.max_tokens);
    override_with(&mut config.prompt.temperature, &args.temperature);

    if !args.strategies.is_empty() {
        let previous = std::mem::take(&mut config.strategies);
        config.strategies = args
            .strategies
            .iter()
            .map(|&kind| {
                previous
                    .iter()
                    .find(|s| s.kind == kind)
                    .cloned()
                    .unwrap_or_else(|| MaskStrategyConfig::new(kind))
            })
            .collect();
    }
    for s in &mut config.strategies {
        args.knobs.apply(s);
    }
    if !args.prompt_modes.is_empty() {
        config.prompt_modes = args.prompt_modes.clone();
    }

    if !args.narration.is_empty() {
        config.filter.narration_ids = args.narration.clone();
    }
    override_opt(&mut config.filter.verb, &args.verb);
    override_opt(&mut config.filter.noun, &args.noun);

    if let Some(table) = &args.completion_table {
        config.completion = Some(CompletionConfig::Scripted {
            table: table.clone(),
        });
    }
    if let Some(remote) = args.remote.config() {
        config.completion = Some(CompletionConfig::Remote(remote));
    }

    match args.backend.as_deref() {
        Some("mock") => config.backend = BackendConfig::Mock,
        Some("adapter") => {
            let endpoint = match (&args.adapter_url, &config.backend) {
                (Some(url), _) => url.clone(),
                (None, BackendConfig::Adapter(cfg)) => cfg.endpoint.clone(),
                (None, BackendConfig::Mock) => bail!("--backend adapter needs --adapter-url"),
            };
            if !matches!(config.backend, BackendConfig::Adapter(_)) {
                config.backend = BackendConfig::Adapter(GlideAdapterConfig::new(endpoint.clone()));
            }
        }
        _ => {}
    }
    if let BackendConfig::Adapter(cfg) = &mut config.backend {
        override_with(&mut cfg.endpoint, &args.adapter_url);
        override_opt(&mut cfg.steps, &args.adapter_steps);
        override_opt(&mut cfg.guidance_scale, &args.adapter_guidance_scale);
        override_with(&mut cfg.timeout_secs, &args.adapter_timeout);
        override_with(&mut cfg.max_concurrency, &args.adapter_concurrency);
    } else if args.adapter_url.is_some() && args.backend.is_none() {
        bail!("--adapter-url given but the backend is mock; add --backend adapter");
    }
    Ok(config)
}

fn override_with<T: Clone>(field: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *field = v.clone();
    }
}

fn override_opt<T: Clone>(field: &mut Option<T>, value: &Option<T>) {
    if value.is_some() {
        field.clone_from(value);
    }
}

fn cmd_mask(args: MaskArgs) -> Result<()> {
    let frame = read_frame(&args.frame)?;
    let mut config = MaskStrategyConfig::new(args.strategy);
    args.knobs.apply(&mut config);
    let detections = args
        .detections
        .as_deref()
        .map(|p| load_detections(p, args.frame_index))
        .transpose()?;
    let regions = args
        .segmentations
        .as_deref()
        .map(|p| load_segmentations(p, args.frame_index))
        .transpose()?;
    let inputs = MaskInputs {
        detections: detections.as_deref(),
        regions: regions.as_deref(),
        noun: args.noun.as_deref(),
    };
    let mut mask = build_mask(&config, frame.dims(), inputs)?;
    if args.downsample {
        mask = downsample_mask(&mask, BACKEND_SIZE, BACKEND_SIZE)?;
    }
    write_mask_png(&mask, &args.out)?;
    println!(
        "{}x{} mask, {} pixel(s) set, written to {}",
        mask.width(),
        mask.height(),
        mask.count_true(),
        args.out.display()
    );
    Ok(())
}

fn completion_client(
    table: &Option<PathBuf>,
    remote: &RemoteArgs,
) -> Result<Option<Box<dyn CompletionClient>>> {
    if let Some(table) = table {
        return Ok(Some(Box::new(ScriptedClient::from_json_file(table)?)));
    }
    match remote.config() {
        Some(cfg) => Ok(Some(Box::new(RemoteCompletionClient::new(cfg)?))),
        None => Ok(None),
    }
}

fn cmd_prompt(args: PromptArgs) -> Result<()> {
    let (verb, noun) = args
        .action
        .trim()
        .split_once(char::is_whitespace)
        .unwrap_or((args.action.trim(), ""));
    let narration = args.narration.as_deref().unwrap_or("");
    let instance = ActionInstance::new(narration, "", "", verb, noun, 0, 1)?;
    let pairs = match &args.pairs {
        Some(path) => load_pairs(path)?,
        None if args.mode == PromptMode::EffectDescription => {
            bail!("effect_description prompts need --pairs")
        }
        None => Vec::new(),
    };

    if args.show_fewshot {
        let seed = exemplar_seed(args.seed, narration);
        print!(
            "{}",
            build_fewshot_prompt(&pairs, args.exemplars, instance.phrase(), seed)?
        );
        println!();
        return Ok(());
    }

    let client = completion_client(&args.completion_table, &args.remote)?;
    let spec = PromptSpec {
        mode: args.mode,
        exemplar_count: args.exemplars,
        seed: args.seed,
        max_tokens: args.max_tokens,
        temperature: 0.0,
    };
    let prompt = make_prompt(&instance, args.mode, client.as_deref(), &pairs, &spec)?;
    println!("{prompt}");
    Ok(())
}

fn cmd_sheet(args: SheetArgs) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let sheet = sheet_from_manifest(&manifest, base, &args.narration)
        .with_context(|| format!("rendering sheet for {}", args.narration))?;
    write_frame_png(&sheet, &args.out)?;
    println!(
        "{}x{} sheet written to {}",
        sheet.width(),
        sheet.height(),
        args.out.display()
    );
    Ok(())
}
