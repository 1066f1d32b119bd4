//! Command-line front end.
//!
//! Every command writes into a fresh run directory under the output root
//! (`--out`, else `$AEGAN_RUNS_DIR`, else `./runs`):
//!
//! ```text
//! runs/<timestamp>-<label>/
//!     manifest.toml
//!     metrics.csv        (train only)
//!     checkpoints/       (train only)
//!     figures/
//!     .lock              (while the command runs)
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, RunConfig};
use crate::data::{load_image, load_image_folder, mirror_horizontal, Dataset};
use crate::error::{AeganError, Result};
use crate::eval::render::{render_pairs, render_samples, render_strip, save_png};
use crate::eval::{
    grid_latents, interpolate_real, mode_coverage, reconstruction_report, sample_grid, ModeCoverageReport,
    ReconstructionReport,
};
use crate::models::{generate, NetworkRole, SampleBatch, SampleShape};
use crate::training::checkpoint::{self, require};
use crate::training::{train_from, MetricRow, Mode, TrainObserver, TrainState, METRICS_HEADER};

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "AEGAN_RUNS_DIR";
pub const DEFAULT_OUT: &str = "runs";
pub const MANIFEST: &str = "manifest.toml";
pub const METRICS: &str = "metrics.csv";
pub const CHECKPOINTS: &str = "checkpoints";
pub const FIGURES: &str = "figures";
pub const LOCK: &str = ".lock";

#[derive(Debug, Parser)]
#[command(name = "aegan", version, about = "Train and evaluate autoencoding generative adversarial networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root [env: AEGAN_RUNS_DIR, default: runs].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// aegan, gan or aae.
    #[arg(long)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override `training.total_steps`.
        #[arg(long)]
        total_steps: Option<u64>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Render a grid of generated samples.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
    },
    /// Reconstruct dataset samples through the encoder and generator.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Image folder; defaults to the configured dataset.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of samples.
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// Interpolate between two real samples in latent space.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// First endpoint: an image path, or comma-separated coordinates for point data.
        #[arg(long)]
        a: String,
        /// Second endpoint, same format as `--a`.
        #[arg(long)]
        b: String,
        /// Mirror the second endpoint horizontally (images only).
        #[arg(long)]
        mirror_b: bool,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compute evaluation reports.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Metrics to compute; defaults to every applicable one.
        #[arg(long, value_enum)]
        metric: Vec<Metric>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Coverage,
    Reconstruction,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Generate { .. } => "generate",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Interpolate { .. } => "interpolate",
            Command::Evaluate { .. } => "evaluate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Train { common, .. }
            | Command::Generate { common, .. }
            | Command::Reconstruct { common, .. }
            | Command::Interpolate { common, .. }
            | Command::Evaluate { common, .. } => common,
        }
    }
}

/// Directory layout recorded in the manifest, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub manifest: PathBuf,
    pub metrics: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
    pub figures: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub started: String,
    pub finished: Option<String>,
    pub status: String,
    pub error: Option<String>,
    /// Checkpoint read by evaluation commands.
    pub input_checkpoint: Option<PathBuf>,
    pub final_step: Option<u64>,
    pub arguments: Vec<String>,
    pub layout: Layout,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AeganError::io(path, e))?;
        toml::from_str(&text).map_err(|e| AeganError::config(path.display().to_string(), e.message().to_string()))
    }
}

/// Version string recorded in manifests.
pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Output root: `--out`, else the environment variable, else `./runs`.
pub fn output_root(out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// A claimed run directory. The lock file is removed on drop.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, label: &str, with_training: bool) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| AeganError::io(root, e))?;
        let stamp = Utc::now().format("%Y%m%d-%H%M%S");
        let mut path = root.join(format!("{stamp}-{label}"));
        let mut attempt = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    attempt += 1;
                    path = root.join(format!("{stamp}-{label}-{attempt}"));
                }
                Err(e) => return Err(AeganError::io(&path, e)),
            }
        }
        let lock = path.join(LOCK);
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| AeganError::io(&lock, e))?;
        writeln!(file, "{}", std::process::id()).map_err(|e| AeganError::io(&lock, e))?;
        let mut dirs = vec![FIGURES];
        if with_training {
            dirs.push(CHECKPOINTS);
        }
        for dir in dirs {
            let p = path.join(dir);
            fs::create_dir(&p).map_err(|e| AeganError::io(&p, e))?;
        }
        Ok(RunDir { path, lock })
    }

    pub fn figures(&self) -> PathBuf {
        self.path.join(FIGURES)
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.path.join(CHECKPOINTS)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let p = self.path.join(name);
        fs::write(&p, contents).map_err(|e| AeganError::io(p, e))
    }

    fn write_manifest(&self, manifest: &RunManifest) -> Result<()> {
        self.write(MANIFEST, &toml::to_string(manifest).expect("manifest serializes"))
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if let Err(e) = fs::remove_file(&self.lock) {
            warn!("could not remove {}: {e}", self.lock.display());
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339()
}

fn checkpoint_name(step: u64) -> String {
    format!("step-{step:08}.ckpt")
}

/// Run a parsed command line. Returns the run directory.
pub fn run(cli: Cli) -> Result<PathBuf> {
    run_with_args(cli, std::env::args().skip(1).collect())
}

/// Run a command, recording `arguments` in the manifest.
pub fn run_with_args(cli: Cli, arguments: Vec<String>) -> Result<PathBuf> {
    let command = cli.command;
    match &command {
        Command::Train { common, total_steps, resume } => train(common, *total_steps, resume.as_deref(), arguments),
        _ => evaluate_command(&command, arguments),
    }
}

fn resolve_config(common: &Common, total_steps: Option<u64>) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.training.seed = seed;
    }
    if let Some(mode) = common.mode {
        config.training.mode = mode;
    }
    if let Some(steps) = total_steps {
        config.training.total_steps = steps;
    }
    config.training().validate()?;
    Ok(config)
}

struct RunObserver<'a> {
    dir: &'a RunDir,
    metrics: BufWriter<File>,
}

impl RunObserver<'_> {
    fn flush(&mut self) -> Result<()> {
        let path = self.dir.path.join(METRICS);
        self.metrics.flush().map_err(|e| AeganError::io(path, e))
    }
}

impl TrainObserver for RunObserver<'_> {
    fn on_metrics(&mut self, row: &MetricRow) -> Result<()> {
        writeln!(self.metrics, "{}", row.csv_line()).map_err(|e| AeganError::io(self.dir.path.join(METRICS), e))
    }

    fn on_checkpoint(&mut self, state: &TrainState) -> Result<()> {
        self.flush()?;
        checkpoint::save(state, &self.dir.checkpoints().join(checkpoint_name(state.step)))
    }
}

fn train(common: &Common, total_steps: Option<u64>, resume: Option<&Path>, arguments: Vec<String>) -> Result<PathBuf> {
    let mut config = resolve_config(common, total_steps)?;
    let dataset = config.data.load()?;
    let state = match resume {
        Some(path) => {
            let mut state = checkpoint::load(path)?;
            if common.config.is_some() && state.config.hash() != config.training().hash() {
                return Err(AeganError::config(
                    "--config",
                    format!("{} was trained with a different configuration", path.display()),
                ));
            }
            if let Some(steps) = total_steps {
                state.config.total_steps = steps;
            }
            config.training.total_steps = state.config.total_steps;
            state
        }
        None => TrainState::new(&config.training(), dataset.shape(), dataset.range())?,
    };
    let mode = state.mode();
    let dir = RunDir::create(&output_root(common.out.as_deref()), mode.name(), true)?;
    info!("run directory {}", dir.path.display());
    let mut manifest = RunManifest {
        command: "train".into(),
        version: version(),
        mode,
        seed: state.config.seed,
        config_hash: format!("{:016x}", state.config.hash()),
        started: now(),
        finished: None,
        status: "running".into(),
        error: None,
        input_checkpoint: resume.map(Path::to_path_buf),
        final_step: None,
        arguments,
        layout: Layout {
            manifest: MANIFEST.into(),
            metrics: Some(METRICS.into()),
            checkpoints: Some(CHECKPOINTS.into()),
            figures: FIGURES.into(),
        },
        config,
    };
    dir.write_manifest(&manifest)?;
    let result = train_in(&dir, state, &dataset, &manifest.config);
    manifest.finished = Some(now());
    match &result {
        Ok(step) => {
            manifest.status = "completed".into();
            manifest.final_step = Some(*step);
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
        }
    }
    dir.write_manifest(&manifest)?;
    result.map(|_| dir.path.clone())
}

fn train_in(dir: &RunDir, state: TrainState, dataset: &Dataset, config: &RunConfig) -> Result<u64> {
    let metrics_path = dir.path.join(METRICS);
    let file = File::create(&metrics_path).map_err(|e| AeganError::io(&metrics_path, e))?;
    let mut observer = RunObserver { dir, metrics: BufWriter::new(file) };
    writeln!(observer.metrics, "{METRICS_HEADER}").map_err(|e| AeganError::io(&metrics_path, e))?;
    checkpoint::save(&state, &dir.checkpoints().join(checkpoint_name(state.step)))?;
    let out = train_from(state, dataset, &mut observer);
    observer.flush()?;
    let state = out?.state;
    let last = dir.checkpoints().join(checkpoint_name(state.step));
    if !last.exists() {
        checkpoint::save(&state, &last)?;
    }
    let grid = sample_grid(&state.networks.generator, &state.prior(), config.eval.grid_rows, config.eval.grid_cols, config.eval.grid_seed)?;
    save_png(&render_samples(&grid.samples, grid.rows, grid.cols)?, &dir.figures().join("samples.png"))?;
    Ok(state.step)
}

/// Configuration for a command reading a checkpoint: `--config` if given,
/// else the manifest of the run that wrote the checkpoint, else defaults.
fn checkpoint_config(common: &Common, checkpoint: &Path) -> Result<RunConfig> {
    if let Some(path) = &common.config {
        return RunConfig::load(path);
    }
    let manifest = checkpoint
        .parent()
        .and_then(Path::parent)
        .map(|run| run.join(MANIFEST))
        .filter(|p| p.is_file());
    match manifest {
        Some(path) => Ok(RunManifest::load(&path)?.config),
        None => Ok(RunConfig::default()),
    }
}

fn evaluate_command(command: &Command, arguments: Vec<String>) -> Result<PathBuf> {
    let common = command.common();
    let checkpoint_path = match command {
        Command::Generate { checkpoint, .. }
        | Command::Reconstruct { checkpoint, .. }
        | Command::Interpolate { checkpoint, .. }
        | Command::Evaluate { checkpoint, .. } => checkpoint.as_path(),
        Command::Train { .. } => unreachable!("train is handled separately"),
    };
    let state = checkpoint::load(checkpoint_path)?;
    let mode = state.mode();
    if let Some(requested) = common.mode {
        if requested != mode {
            return Err(AeganError::Usage(format!(
                "--mode {} does not match the {} checkpoint",
                requested.name(),
                mode.name()
            )));
        }
    }
    let needs_encoder = match command {
        Command::Reconstruct { .. } | Command::Interpolate { .. } => true,
        Command::Evaluate { metric, .. } => metric.contains(&Metric::Reconstruction),
        _ => false,
    };
    if needs_encoder {
        require(&state.networks, NetworkRole::Encoder)?;
    }
    let config = checkpoint_config(common, checkpoint_path)?;
    let seed = common.seed.unwrap_or(config.eval.grid_seed);
    let label = format!("{}-{}", mode.name(), command.name());
    let task = prepare(command, &state, &config)?;
    let dir = RunDir::create(&output_root(common.out.as_deref()), &label, false)?;
    let mut manifest = RunManifest {
        command: command.name().into(),
        version: version(),
        mode,
        seed,
        config_hash: format!("{:016x}", state.config.hash()),
        started: now(),
        finished: None,
        status: "running".into(),
        error: None,
        input_checkpoint: Some(checkpoint_path.to_path_buf()),
        final_step: Some(state.step),
        arguments,
        layout: Layout {
            manifest: MANIFEST.into(),
            metrics: None,
            checkpoints: None,
            figures: FIGURES.into(),
        },
        config: config.clone(),
    };
    dir.write_manifest(&manifest)?;
    let result = execute(task, &state, &config, seed, &dir);
    manifest.finished = Some(now());
    match &result {
        Ok(()) => manifest.status = "completed".into(),
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
        }
    }
    dir.write_manifest(&manifest)?;
    result.map(|_| dir.path.clone())
}

/// Inputs loaded before the run directory is created, so bad inputs leave
/// nothing behind.
enum Task {
    Generate { rows: usize, cols: usize },
    Reconstruct { dataset: Dataset, n: usize },
    Interpolate { a: Array1<f64>, b: Array1<f64>, steps: usize },
    Evaluate { coverage: bool, reconstruction: Option<Dataset> },
}

fn prepare(command: &Command, state: &TrainState, config: &RunConfig) -> Result<Task> {
    Ok(match command {
        Command::Generate { rows, cols, .. } => Task::Generate {
            rows: rows.unwrap_or(config.eval.grid_rows),
            cols: cols.unwrap_or(config.eval.grid_cols),
        },
        Command::Reconstruct { data, n, .. } => {
            let dataset = match data {
                Some(path) => load_folder_for(state, path)?,
                None => config.data.load()?,
            };
            Task::Reconstruct {
                dataset,
                n: n.unwrap_or(config.eval.reconstruction_samples),
            }
        }
        Command::Interpolate { a, b, mirror_b, steps, .. } => {
            let a = load_endpoint(state, a)?;
            let mut b = load_endpoint(state, b)?;
            if *mirror_b {
                let SampleShape::Image(image) = state.sample_shape else {
                    return Err(AeganError::Usage("--mirror-b needs image data".into()));
                };
                b = Array1::from(mirror_horizontal(b.view(), image));
            }
            Task::Interpolate {
                a,
                b,
                steps: steps.unwrap_or(config.eval.interpolation_steps),
            }
        }
        Command::Evaluate { metric, .. } => {
            let is_mixture = config.data.source == DataSource::Mixture && state.sample_shape == (SampleShape::Point { dim: 2 });
            let all = metric.is_empty();
            let coverage = metric.contains(&Metric::Coverage) || (all && is_mixture);
            if coverage && !is_mixture {
                return Err(AeganError::Usage("coverage needs a 2-D mixture checkpoint".into()));
            }
            let wants_recon = metric.contains(&Metric::Reconstruction) || (all && state.mode().has_encoder());
            let reconstruction = if !wants_recon {
                None
            } else if is_mixture {
                Some(held_out_mixture(config)?)
            } else {
                Some(config.data.load()?)
            };
            Task::Evaluate { coverage, reconstruction }
        }
        Command::Train { .. } => unreachable!("train is handled separately"),
    })
}

fn load_folder_for(state: &TrainState, path: &Path) -> Result<Dataset> {
    let SampleShape::Image(image) = state.sample_shape else {
        return Err(AeganError::Usage("--data takes an image folder; this checkpoint models points".into()));
    };
    load_image_folder(path, (image.height, image.width), false)
}

fn load_endpoint(state: &TrainState, spec: &str) -> Result<Array1<f64>> {
    match state.sample_shape {
        SampleShape::Image(image) => Ok(Array1::from(load_image(Path::new(spec), image.height, image.width)?)),
        SampleShape::Point { dim } => {
            let values = spec
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| AeganError::Data(format!("bad point `{spec}`: {e}")))?;
            if values.len() != dim {
                return Err(AeganError::shape(format!("{dim} coordinates"), format!("{}", values.len())));
            }
            Ok(Array1::from(values))
        }
    }
}

fn execute(task: Task, state: &TrainState, config: &RunConfig, seed: u64, dir: &RunDir) -> Result<()> {
    let g = &state.networks.generator;
    match task {
        Task::Generate { rows, cols } => {
            let grid = sample_grid(g, &state.prior(), rows, cols, seed)?;
            save_png(&render_samples(&grid.samples, rows, cols)?, &dir.figures().join("samples.png"))
        }
        Task::Reconstruct { dataset, n } => {
            let e = require(&state.networks, NetworkRole::Encoder)?;
            write_reconstruction(e, g, &dataset, n, seed, dir)
        }
        Task::Interpolate { a, b, steps } => {
            let e = require(&state.networks, NetworkRole::Encoder)?;
            let result = interpolate_real(e, g, a.view(), b.view(), steps)?;
            save_png(&render_strip(&result.frames)?, &dir.figures().join("interpolation.png"))?;
            dir.write("interpolation_latents.csv", &result.latent_csv())
        }
        Task::Evaluate { coverage, reconstruction } => {
            if coverage {
                let (report, samples) = coverage_report(state, config, seed)?;
                info!("{}", report.summary().trim_end());
                dir.write("coverage.csv", &report.csv())?;
                dir.write("coverage.txt", &report.summary())?;
                save_png(&render_samples(&samples, 1, 1)?, &dir.figures().join("coverage.png"))?;
            }
            if let Some(dataset) = reconstruction {
                let e = require(&state.networks, NetworkRole::Encoder)?;
                write_reconstruction(e, g, &dataset, config.eval.reconstruction_samples, seed, dir)?;
            }
            Ok(())
        }
    }
}

/// Mode coverage of `coverage_samples` generated points drawn under `seed`.
pub fn coverage_report(state: &TrainState, config: &RunConfig, seed: u64) -> Result<(ModeCoverageReport, SampleBatch)> {
    let latents = grid_latents(&state.prior(), config.eval.coverage_samples, seed)?;
    let samples = generate(&state.networks.generator, &latents)?;
    let (radius, min_count) = config.eval.coverage_thresholds(config.data.mode_std);
    let report = mode_coverage(&samples, &config.data.mixture().centers(), radius, min_count)?;
    Ok((report, samples))
}

/// Fresh mixture points, enough for `reconstruction_samples`.
pub fn held_out_mixture(config: &RunConfig) -> Result<Dataset> {
    let per_mode = config.eval.reconstruction_samples.div_ceil(config.data.n_modes.max(1));
    config.data.held_out(per_mode)
}

/// Reconstruction statistics on held-out mixture points.
pub fn held_out_reconstruction(state: &TrainState, config: &RunConfig, seed: u64) -> Result<ReconstructionReport> {
    let e = require(&state.networks, NetworkRole::Encoder)?;
    let data = held_out_mixture(config)?;
    reconstruction_report(e, &state.networks.generator, &data, config.eval.reconstruction_samples, seed)
}

fn write_reconstruction(
    e: &crate::models::ParameterSet,
    g: &crate::models::ParameterSet,
    dataset: &Dataset,
    n: usize,
    seed: u64,
    dir: &RunDir,
) -> Result<()> {
    let report = reconstruction_report(e, g, dataset, n, seed)?;
    info!("{}", report.summary().trim_end());
    dir.write("reconstruction.csv", &report.csv())?;
    dir.write("reconstruction.txt", &report.summary())?;
    let per_row = ((report.errors.len() as f64).sqrt().ceil() as usize).max(1);
    save_png(
        &render_pairs(&report.originals, &report.reconstructions, per_row)?,
        &dir.figures().join("reconstructions.png"),
    )
}
