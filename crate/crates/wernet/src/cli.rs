//! Command-line front end. Exit codes: 0 success, 1 usage error (bad flags,
//! missing or invalid input files), 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wernet_core::art::art_reconstruct;
use wernet_core::camera::{CameraPose, DistanceMode, LayoutSpec, PitchPattern};
use wernet_core::encoder::EncoderVariant;
use wernet_core::metrics::{cosine_distance, cosine_similarity};
use wernet_core::phantom::JetParams;
use wernet_core::project::Image;
use wernet_core::train::{train, transfer_train, TrainConfig};
use wernet_core::{GridGeometry, VoxelGrid};

use crate::config::{DatasetSpec, ExperimentConfig, GridSpec, NoiseSpec, PhantomSpec};
use crate::error::{io_err, Error, Result};
use crate::experiment::{
    apply_noise, case_layout, run_experiment, seeded_art, seeded_train, train_summary, RunSummary, Status,
    WallClock,
};
use crate::formats::{img, pgm, vxg, wen};
use crate::metrics_log::{epoch_rows, step_rows, write_log, LogRow};
use crate::parallel::{configure_threads, project_views, trace_views};
use crate::seeds::{self, SeedTable};
use crate::slices::{export_cross_sections, Axis};

#[derive(Debug, Parser)]
#[command(name = "wernet", version, about = "Limited-view emission tomography: ART and weight-encoder reconstruction")]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for projection and tracing (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Print per-epoch progress to stderr.
    #[arg(long, global = true)]
    pub progress: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic phantom to DIR/phantom.vxg.
    Phantom(PhantomArgs),
    /// Write the camera poses of a layout to DIR/layout.json.
    Layout(LayoutArgs),
    /// Project a grid through a layout, one IMG1 file per pose.
    Project(ProjectArgs),
    /// Add Gaussian detector noise to a directory of images.
    Noise(NoiseArgs),
    /// ART reconstruction.
    Art(ArtArgs),
    /// Train voxels and weight encoder together.
    Train(TrainArgs),
    /// Train voxels against a frozen encoder checkpoint.
    Transfer(TransferArgs),
    /// Cosine similarity and distance of two grids, as JSON.
    Eval(EvalArgs),
    /// Export cross sections as 16-bit PGMs.
    Slices(SliceArgs),
    /// Run the full experiment described by --config.
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhantomKind {
    Jet,
    Turbulent,
    Homogeneous,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, value_enum)]
    pub kind: Option<PhantomKind>,
    /// Voxel counts, e.g. 16,64,16.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Voxel edge, millimeters.
    #[arg(long)]
    pub voxel_size: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    /// Grid whose geometry the cameras frame.
    #[arg(long)]
    pub grid: PathBuf,
    /// Config case to start from (default: the first).
    #[arg(long)]
    pub case: Option<String>,
    /// Number of cameras.
    #[arg(long)]
    pub views: Option<usize>,
    /// First view angle, degrees.
    #[arg(long)]
    pub start: Option<f64>,
    /// View angle increment, degrees.
    #[arg(long)]
    pub step: Option<f64>,
    /// Pitch angle, degrees.
    #[arg(long)]
    pub pitch: Option<f64>,
    /// Alternate the pitch sign between views.
    #[arg(long)]
    pub alternate_pitch: bool,
    /// Camera distance, millimeters.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Detector rows.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Detector columns, along the flame axis.
    #[arg(long)]
    pub cols: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub layout: PathBuf,
    /// Also write a PGM next to every image.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Directory of IMG1 files.
    #[arg(long)]
    pub images: PathBuf,
    /// Noise standard deviation as a fraction of each image's maximum.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Clamp noisy pixels at zero.
    #[arg(long)]
    pub clamp: bool,
}

/// Explicit inputs of a reconstruction. Without them the method runs on the
/// cases of --config.
#[derive(Debug, Args)]
pub struct Inputs {
    /// Directory of IMG1 files.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Poses written by `layout`.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Reference grid: supplies the geometry and the similarity target.
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ArtArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Full passes over all rays.
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Relaxation factor, in (0, 2).
    #[arg(long)]
    pub relaxation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per batch; a step uses batch_samples * rays_per_sample rays.
    #[arg(long)]
    pub batch_samples: Option<usize>,
    #[arg(long)]
    pub rays_per_sample: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Encoder variant: no_bias, bias_mask or no_bias_bn.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<EncoderVariant>,
    /// Disable gradient normalization.
    #[arg(long)]
    pub no_grad_norm: bool,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// WEN1 checkpoint (default: the config's transfer checkpoint).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reconstruction (.vxg).
    #[arg(long)]
    pub a: PathBuf,
    /// Ground truth (.vxg).
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Slice indices, e.g. 8,32.
    #[arg(long, value_delimiter = ',', required = true)]
    pub positions: Vec<usize>,
    /// Also write |grid - reference| slices.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value = "slice")]
    pub stem: String,
}

fn parse_variant(s: &str) -> std::result::Result<EncoderVariant, String> {
    EncoderVariant::from_name(s).ok_or_else(|| format!("unknown variant {s:?} (no_bias, bias_mask, no_bias_bn)"))
}

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::MissingFile(_) | Error::Config(_) | Error::Json { .. } => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(message: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(message.into()))
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Results go to stdout, diagnostics to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}\n\nFor usage, run with --help."),
                Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            f.exit_code()
        }
    }
}

struct Context<'a> {
    cli: &'a Cli,
    config: Option<ExperimentConfig>,
}

impl Context<'_> {
    fn out(&self) -> CliResult<PathBuf> {
        match self.cli.out.clone().or_else(|| self.config.as_ref().and_then(|c| c.output_dir.clone())) {
            Some(o) => Ok(o),
            None => usage("--out DIR is required"),
        }
    }

    fn seeds(&self) -> SeedTable {
        SeedTable::new(self.cli.seed.or(self.config.as_ref().map(|c| c.seed)).unwrap_or(0))
    }

    fn require_config(&self, command: &str) -> CliResult<ExperimentConfig> {
        match &self.config {
            Some(c) => Ok(c.clone()),
            None => usage(format!("`{command}` without explicit inputs needs --config PATH")),
        }
    }

    fn observer(&self, label: &str) -> WallClock {
        if self.cli.progress {
            WallClock::verbose(label)
        } else {
            WallClock::new()
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    let config = match &cli.config {
        Some(path) => {
            let mut c = ExperimentConfig::load(path)?;
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            Some(c)
        }
        None => None,
    };
    let ctx = Context { cli, config };
    match &cli.command {
        Command::Phantom(a) => phantom(&ctx, a),
        Command::Layout(a) => layout(&ctx, a),
        Command::Project(a) => project(&ctx, a),
        Command::Noise(a) => noise(&ctx, a),
        Command::Art(a) => art(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Transfer(a) => transfer_cmd(&ctx, a),
        Command::Eval(a) => eval(a),
        Command::Slices(a) => slices(&ctx, a),
        Command::Run => run(&ctx),
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("plain data serializes"));
}

fn existing(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path.to_owned()).into())
    }
}

fn read_grid(path: &Path) -> CliResult<VoxelGrid> {
    Ok(vxg::read(existing(path)?)?)
}

fn read_layout(path: &Path) -> CliResult<Vec<CameraPose>> {
    let text = fs::read_to_string(existing(path)?).map_err(io_err(path))?;
    let layout: Vec<CameraPose> = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    if layout.is_empty() {
        return usage(format!("{} holds no poses", path.display()));
    }
    Ok(layout)
}

/// All `*.img` files of `dir`, ordered by view id.
fn read_images(dir: &Path) -> CliResult<Vec<Image>> {
    let entries = fs::read_dir(existing(dir)?).map_err(io_err(dir))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(io_err(dir))?.path();
        if p.extension().is_some_and(|x| x == "img") {
            paths.push(p);
        }
    }
    let mut images = paths
        .iter()
        .map(|p| Ok(img::read(p)?.0))
        .collect::<Result<Vec<_>>>()?;
    images.sort_by_key(|im| im.view_id);
    if images.is_empty() {
        return usage(format!("no .img files in {}", dir.display()));
    }
    Ok(images)
}

fn write_images(dir: &Path, images: &[Image], layout: Option<&[CameraPose]>, with_pgm: bool) -> CliResult<()> {
    for (i, im) in images.iter().enumerate() {
        let path = dir.join(img::file_name(im.view_id));
        img::write(&path, im, layout.map(|l| &l[i]))?;
        if with_pgm {
            pgm::write(&path.with_extension("pgm"), im.rows(), im.cols(), im.pixels())?;
        }
    }
    Ok(())
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, text).map_err(io_err(path))?;
    Ok(())
}

fn phantom(ctx: &Context, a: &PhantomArgs) -> CliResult<()> {
    let base = ctx.config.as_ref();
    let mut grid = base.map(|c| c.grid).unwrap_or(GridSpec {
        dims: [16, 64, 16],
        voxel_size_mm: 0.5,
    });
    if let Some(d) = &a.dims {
        let Ok(d) = <[usize; 3]>::try_from(d.as_slice()) else {
            return usage(format!("--dims needs three values, got {}", d.len()));
        };
        grid.dims = d;
    }
    if let Some(v) = a.voxel_size {
        grid.voxel_size_mm = v;
    }
    let spec = match a.kind {
        Some(PhantomKind::Jet) => PhantomSpec::Jet {
            params: JetParams::default(),
        },
        Some(PhantomKind::Turbulent) => PhantomSpec::Turbulent,
        Some(PhantomKind::Homogeneous) => PhantomSpec::Homogeneous,
        None => base.map_or(
            PhantomSpec::Jet {
                params: JetParams::default(),
            },
            |c| c.phantom.clone(),
        ),
    };
    let seed = ctx.seeds().get(seeds::PHANTOM);
    let truth = spec.build(grid.geometry()?, seed)?;
    let path = ctx.out()?.join("phantom.vxg");
    vxg::write(&path, &truth)?;
    println!("{}", path.display());
    Ok(())
}

fn layout(ctx: &Context, a: &LayoutArgs) -> CliResult<()> {
    let grid = read_grid(&a.grid)?;
    let mut spec = match (&ctx.config, &a.case) {
        (Some(c), Some(name)) => match c.cases.iter().find(|k| &k.name == name) {
            Some(k) => k.layout,
            None => return usage(format!("config has no case {name:?}")),
        },
        (Some(c), None) => c.cases[0].layout,
        (None, Some(_)) => return usage("--case needs --config"),
        (None, None) => LayoutSpec::default(),
    };
    if let Some(v) = a.views {
        spec.n_views = v;
    }
    if let Some(v) = a.start {
        spec.view_angle_start = v;
    }
    if let Some(v) = a.step {
        spec.view_angle_step = v;
    }
    if a.pitch.is_some() || a.alternate_pitch {
        let p = a.pitch.unwrap_or(match spec.pitch {
            PitchPattern::Constant(p) | PitchPattern::Alternating(p) => p,
        });
        spec.pitch = if a.alternate_pitch {
            PitchPattern::Alternating(p)
        } else {
            PitchPattern::Constant(p)
        };
    }
    if let Some(d) = a.distance {
        spec.distance = DistanceMode::Fixed(d);
    }
    if let Some(v) = a.rows {
        spec.rows = v;
    }
    if let Some(v) = a.cols {
        spec.cols = v;
    }
    let poses = case_layout(&spec, grid.geometry(), &mut ctx.seeds())?;
    let path = ctx.out()?.join("layout.json");
    write_json_file(&path, &poses)?;
    println!("{}", path.display());
    Ok(())
}

fn project(ctx: &Context, a: &ProjectArgs) -> CliResult<()> {
    let grid = read_grid(&a.grid)?;
    let layout = read_layout(&a.layout)?;
    let images = project_views(&grid, &layout)?;
    let out = ctx.out()?;
    write_images(&out, &images, Some(&layout), a.pgm)?;
    println!("{} images in {}", images.len(), out.display());
    Ok(())
}

fn noise(ctx: &Context, a: &NoiseArgs) -> CliResult<()> {
    let spec = match (a.fraction, ctx.config.as_ref().and_then(|c| c.noise)) {
        (Some(fraction), _) => NoiseSpec {
            fraction,
            clamp: a.clamp,
        },
        (None, Some(n)) => NoiseSpec {
            clamp: n.clamp || a.clamp,
            ..n
        },
        (None, None) => return usage("--fraction is required without a config noise section"),
    };
    if !(spec.fraction.is_finite() && spec.fraction >= 0.0) {
        return usage(format!("--fraction must be non-negative, got {}", spec.fraction));
    }
    let images = read_images(&a.images)?;
    let noisy = apply_noise(&images, &spec, &mut ctx.seeds())?;
    let out = ctx.out()?;
    write_images(&out, &noisy, None, false)?;
    println!("{} images in {}", noisy.len(), out.display());
    Ok(())
}

/// Loaded explicit inputs, or `None` when all flags are absent.
fn load_inputs(i: &Inputs) -> CliResult<Option<(GridGeometry, VoxelGrid, Vec<CameraPose>, Vec<Image>)>> {
    match (&i.images, &i.layout, &i.grid) {
        (None, None, None) => Ok(None),
        (Some(im), Some(l), Some(g)) => {
            let truth = read_grid(g)?;
            let layout = read_layout(l)?;
            let images = read_images(im)?;
            if images.len() != layout.len() {
                return usage(format!("{} images but {} poses", images.len(), layout.len()));
            }
            Ok(Some((*truth.geometry(), truth, layout, images)))
        }
        _ => usage("--images, --layout and --grid go together"),
    }
}

/// Runs the config's experiment with only the selected methods.
fn run_restricted(ctx: &Context, command: &str, restrict: impl FnOnce(&mut ExperimentConfig)) -> CliResult<()> {
    let mut config = ctx.require_config(command)?;
    restrict(&mut config);
    config.validate()?;
    finish_run(&config, &ctx.out()?, ctx.cli.progress)
}

fn finish_run(config: &ExperimentConfig, out: &Path, progress: bool) -> CliResult<()> {
    let manifest = run_experiment(config, out, progress)?;
    print_json(&serde_json::json!({ "status": manifest.status, "cases": manifest.cases, "errors": manifest.errors }));
    match manifest.status {
        Status::Ok => Ok(()),
        Status::Failed => Err(Failure::Runtime(format!(
            "{} stage(s) failed; see {}",
            manifest.errors.len(),
            out.join(crate::experiment::MANIFEST).display()
        ))),
    }
}

fn art(ctx: &Context, a: &ArtArgs) -> CliResult<()> {
    let mut config = ctx.config.as_ref().and_then(|c| c.art).unwrap_or_default();
    if let Some(s) = a.sweeps {
        config.sweeps = s;
    }
    if let Some(r) = a.relaxation {
        config.relaxation = r;
    }
    config.validate().map_err(Error::from)?;
    let Some((geom, truth, layout, images)) = load_inputs(&a.inputs)? else {
        return run_restricted(ctx, "art", |c| {
            c.art = Some(config);
            c.wernet = None;
            c.transfer = None;
        });
    };
    let config = seeded_art(&config, &mut ctx.seeds());
    let result = art_reconstruct(&images, &layout, &geom, &config, Some(&truth)).map_err(Error::from)?;
    let out = ctx.out()?;
    vxg::write(&out.join("recon.vxg"), &result.grid)?;
    write_log(&out.join("metrics.csv"), result.history.iter().map(LogRow::from).collect::<Vec<_>>())?;
    let similarity = cosine_similarity(result.grid.values(), truth.values()).map_err(Error::from)?;
    print_json(&RunSummary::new(similarity, result.history.len(), None, None));
    Ok(())
}

fn train_config(ctx: &Context, o: &TrainOverrides) -> TrainConfig {
    let mut c = ctx.config.as_ref().and_then(|c| c.wernet).unwrap_or_default();
    if let Some(e) = o.epochs {
        c.epochs = e;
    }
    if let Some(b) = o.batch_samples {
        c.batch_samples = b;
    }
    if let Some(r) = o.rays_per_sample {
        c.rays_per_sample = r;
    }
    c
}

fn dataset_spec(ctx: &Context) -> DatasetSpec {
    ctx.config.as_ref().map(|c| c.dataset).unwrap_or_default()
}

fn write_training(out: &Path, state: &wernet_core::train::TrainState) -> CliResult<()> {
    vxg::write(&out.join("recon.vxg"), &state.voxel_grid().map_err(Error::from)?)?;
    write_log(&out.join("metrics.csv"), epoch_rows(&state.history).collect::<Vec<_>>())?;
    let steps: Vec<_> = step_rows(&state.history).collect();
    if !steps.is_empty() {
        write_log(&out.join("iterations.csv"), steps)?;
    }
    Ok(())
}

fn train_cmd(ctx: &Context, a: &TrainArgs) -> CliResult<()> {
    let mut config = train_config(ctx, &a.overrides);
    if let Some(v) = a.variant {
        config.encoder.variant = v;
    }
    if a.no_grad_norm {
        config.grad_norm_enabled = false;
    }
    config.validate().map_err(Error::from)?;
    let Some((geom, truth, layout, images)) = load_inputs(&a.inputs)? else {
        return run_restricted(ctx, "train", |c| {
            c.art = None;
            c.wernet = Some(config);
            c.transfer = None;
        });
    };
    let mut seeds = ctx.seeds();
    let options = wernet_core::dataset::DatasetOptions {
        include_zero_pixels: dataset_spec(ctx).include_zero_pixels,
        seed: seeds.get(seeds::DATASET),
    };
    let dataset = trace_views(&geom, &layout, &images, options)?;
    let config = seeded_train(&config, &mut seeds, seeds::WERNET);
    let state = train(geom, &dataset, &config, Some(&truth), &mut ctx.observer("train")).map_err(Error::from)?;
    let out = ctx.out()?;
    write_training(&out, &state)?;
    let summary = train_summary(&state, &truth, None)?;
    let provenance = serde_json::json!({
        "master_seed": seeds.master,
        "epochs": state.epoch,
        "steps": state.step,
        "final_similarity": summary.final_similarity,
    });
    wen::write(&out.join("encoder.wen"), &state.encoder, &provenance)?;
    print_json(&summary);
    Ok(())
}

fn transfer_cmd(ctx: &Context, a: &TransferArgs) -> CliResult<()> {
    let config = train_config(ctx, &a.overrides);
    config.validate().map_err(Error::from)?;
    let Some((geom, truth, layout, images)) = load_inputs(&a.inputs)? else {
        let checkpoint = a.checkpoint.clone();
        let mut failure = None;
        let result = run_restricted(ctx, "transfer", |c| {
            c.art = None;
            c.wernet = Some(config);
            match (checkpoint, c.transfer.take()) {
                (Some(p), _) => {
                    c.transfer = Some(crate::config::TransferSpec {
                        checkpoint: p,
                        scratch_baseline: false,
                    })
                }
                (None, Some(t)) => {
                    c.transfer = Some(crate::config::TransferSpec {
                        scratch_baseline: false,
                        ..t
                    })
                }
                (None, None) => failure = Some("transfer needs --checkpoint or a config transfer section"),
            }
        });
        return match failure {
            Some(m) => usage(m),
            None => result,
        };
    };
    let Some(checkpoint) = &a.checkpoint else {
        return usage("--checkpoint is required with explicit inputs");
    };
    let (encoder, _) = wen::read(existing(checkpoint)?)?;
    let mut seeds = ctx.seeds();
    let options = wernet_core::dataset::DatasetOptions {
        include_zero_pixels: dataset_spec(ctx).include_zero_pixels,
        seed: seeds.get(seeds::DATASET),
    };
    let dataset = trace_views(&geom, &layout, &images, options)?;
    let config = seeded_train(&config, &mut seeds, seeds::TRANSFER);
    let state = transfer_train(geom, &encoder, &dataset, &config, Some(&truth), &mut ctx.observer("transfer"))
        .map_err(Error::from)?;
    write_training(&ctx.out()?, &state)?;
    print_json(&train_summary(&state, &truth, None)?);
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let x = read_grid(&a.a)?;
    let y = read_grid(&a.b)?;
    if x.dims() != y.dims() {
        return Err(Failure::Runtime(format!("grids differ in dims: {:?} vs {:?}", x.dims(), y.dims())));
    }
    let s = cosine_similarity(x.values(), y.values()).map_err(Error::from)?;
    let d = cosine_distance(x.values(), y.values()).map_err(Error::from)?;
    print_json(&serde_json::json!({ "S_C": s, "D_C": d }));
    Ok(())
}

fn slices(ctx: &Context, a: &SliceArgs) -> CliResult<()> {
    let grid = read_grid(&a.grid)?;
    let reference = a.reference.as_deref().map(read_grid).transpose()?;
    let files = export_cross_sections(&grid, a.axis, &a.positions, reference.as_ref(), &ctx.out()?, &a.stem)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn run(ctx: &Context) -> CliResult<()> {
    let config = ctx.require_config("run")?;
    finish_run(&config, &ctx.out()?, ctx.cli.progress)
}
