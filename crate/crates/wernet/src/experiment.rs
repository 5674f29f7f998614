//! The experiment runner: phantom, layouts, projection, optional noise, then
//! ART, encoder training and frozen-encoder transfer on every case.
//!
//! Everything a run writes lands under one output directory and is listed in
//! `manifest.json` with its SHA-256. Stage failures are recorded in the
//! manifest instead of aborting the other cases.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wernet_core::art::{art_reconstruct, ArtConfig, RayOrder};
use wernet_core::camera::{build_layout, CameraPose, DistanceMode, LayoutSpec};
use wernet_core::dataset::DatasetOptions;
use wernet_core::encoder::EncoderParams;
use wernet_core::metrics::cosine_similarity;
use wernet_core::project::{add_noise, Image};
use wernet_core::train::{transfer_train, train, RecordKind, TrainConfig, TrainObserver, TrainRecord, TrainState};
use wernet_core::{GridGeometry, VoxelGrid};

use crate::config::{ExperimentConfig, NoiseSpec, PhantomSpec};
use crate::error::{io_err, Error, Result};
use crate::formats::{img, pgm, rds, vxg, wen};
use crate::metrics_log::{epoch_rows, step_rows, write_log, LogRow};
use crate::parallel::{project_views, trace_views};
use crate::seeds::{self, noise_name, SeedTable};
use crate::slices::export_cross_sections;

pub const MANIFEST: &str = "manifest.json";

/// Wall clock for training records, with optional progress lines on stderr.
pub struct WallClock {
    start: Instant,
    label: Option<String>,
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            label: None,
        }
    }

    /// Prints every epoch record prefixed with `label`.
    pub fn verbose(label: impl Into<String>) -> Self {
        Self {
            start: Instant::now(),
            label: Some(label.into()),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl TrainObserver for WallClock {
    fn elapsed_ms(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn on_record(&mut self, r: &TrainRecord) {
        if let (Some(label), RecordKind::Epoch) = (&self.label, r.kind) {
            let sc = r.similarity.map_or_else(|| "-".to_owned(), |s| format!("{s:.6}"));
            eprintln!("[{label}] epoch {:>3}  loss {:.4e}  S_C {sc}  {:.1}s", r.epoch, r.loss, r.wall_ms / 1e3);
        }
    }
}

/// Final metrics of one reconstruction. `final_distance` is `1 - final_similarity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_similarity: f64,
    pub final_distance: f64,
    /// Epochs, or sweeps for ART.
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    /// Whether `final_distance` is below the configured target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

impl RunSummary {
    pub fn new(similarity: f64, epochs: usize, steps: Option<u64>, target: Option<f64>) -> Self {
        let distance = 1.0 - similarity;
        Self {
            final_similarity: similarity,
            final_distance: distance,
            epochs,
            steps,
            passed: target.map(|t| distance < t),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub name: String,
    pub n_views: usize,
    #[serde(default)]
    pub rays: Option<usize>,
    #[serde(default)]
    pub art: Option<RunSummary>,
    #[serde(default)]
    pub wernet: Option<RunSummary>,
    #[serde(default)]
    pub transfer: Option<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub status: Status,
    pub config: ExperimentConfig,
    pub seeds: SeedTable,
    pub cases: Vec<CaseReport>,
    pub files: Vec<FileEntry>,
    pub errors: Vec<String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
    }

    pub fn case(&self, name: &str) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.name == name)
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory that remembers what was written to it.
struct Outputs {
    root: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn record(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if !self.written.contains(&rel) {
            self.written.push(rel);
        }
    }

    fn entries(&self) -> Result<Vec<FileEntry>> {
        self.written
            .iter()
            .map(|rel| {
                let path = self.root.join(rel);
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                Ok(FileEntry {
                    path: rel.clone(),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                })
            })
            .collect()
    }
}

/// Layout of one case, with any random camera distances reseeded from the
/// master seed.
pub fn case_layout(spec: &LayoutSpec, geom: &GridGeometry, seeds: &mut SeedTable) -> Result<Vec<CameraPose>> {
    let mut spec = *spec;
    if let DistanceMode::UniformRandom { seed, .. } = &mut spec.distance {
        *seed = seeds.get(seeds::LAYOUT);
    }
    Ok(build_layout(&spec, geom)?)
}

/// Adds noise to each image with the seed of its view.
pub fn apply_noise(images: &[Image], noise: &NoiseSpec, seeds: &mut SeedTable) -> Result<Vec<Image>> {
    images
        .iter()
        .map(|im| Ok(add_noise(im, noise.fraction, seeds.get(&noise_name(im.view_id)), noise.clamp)?))
        .collect()
}

pub fn seeded_art(config: &ArtConfig, seeds: &mut SeedTable) -> ArtConfig {
    let mut c = *config;
    if let RayOrder::Shuffled { seed } = &mut c.order {
        *seed = seeds.get(seeds::ART);
    }
    c
}

pub fn seeded_train(config: &TrainConfig, seeds: &mut SeedTable, component: &str) -> TrainConfig {
    TrainConfig {
        seed: seeds.get(component),
        ..*config
    }
}

pub fn dataset_options(config: &ExperimentConfig, seeds: &mut SeedTable) -> DatasetOptions {
    DatasetOptions {
        include_zero_pixels: config.dataset.include_zero_pixels,
        seed: seeds.get(seeds::DATASET),
    }
}

fn phantom_name(spec: &PhantomSpec) -> &'static str {
    match spec {
        PhantomSpec::Jet { .. } => "jet",
        PhantomSpec::Turbulent => "turbulent",
        PhantomSpec::Homogeneous => "homogeneous",
        PhantomSpec::File { .. } => "file",
    }
}

/// The training-side summary of a finished state.
pub fn train_summary(state: &TrainState, truth: &VoxelGrid, target: Option<f64>) -> Result<RunSummary> {
    let similarity = match state.final_similarity() {
        Some(s) => s,
        None => cosine_similarity(&state.voxels, truth.values())?,
    };
    Ok(RunSummary::new(similarity, state.epoch, Some(state.step), target))
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    out: Outputs,
    seeds: SeedTable,
    errors: Vec<String>,
    progress: bool,
}

impl Runner<'_> {
    fn write_grid(&mut self, rel: &str, grid: &VoxelGrid) -> Result<()> {
        let path = self.out.path(rel);
        vxg::write(&path, grid)?;
        self.out.record(&path);
        Ok(())
    }

    fn write_log(&mut self, rel: &str, rows: Vec<LogRow>) -> Result<()> {
        let path = self.out.path(rel);
        write_log(&path, rows)?;
        self.out.record(&path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let path = self.out.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let text = serde_json::to_string_pretty(value).expect("plain data serializes");
        fs::write(&path, text).map_err(io_err(&path))?;
        self.out.record(&path);
        Ok(())
    }

    fn export_slices(&mut self, dir: &str, grid: &VoxelGrid, truth: &VoxelGrid) -> Result<()> {
        let Some(spec) = &self.config.slices else { return Ok(()) };
        let files = export_cross_sections(grid, spec.axis, &spec.positions, Some(truth), &self.out.path(dir), "slice")?;
        for f in files {
            self.out.record(&f);
        }
        Ok(())
    }

    fn observer(&self, label: String) -> WallClock {
        if self.progress {
            WallClock::verbose(label)
        } else {
            WallClock::new()
        }
    }

    /// Runs `stage`, recording its error under `context`.
    fn stage<T>(&mut self, context: &str, stage: impl FnOnce(&mut Self) -> Result<T>) -> Option<T> {
        match stage(self) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{context}: {e}"));
                None
            }
        }
    }

    fn run_case(
        &mut self,
        index: usize,
        geom: &GridGeometry,
        truth: &VoxelGrid,
        frozen: Option<&EncoderParams>,
    ) -> CaseReport {
        let config = self.config;
        let case = &config.cases[index];
        let name = case.name.clone();
        let mut report = CaseReport {
            name: name.clone(),
            n_views: case.layout.n_views,
            ..CaseReport::default()
        };
        let dir = format!("cases/{name}");
        let target = self.config.target_distance;
        let Some((layout, images)) = self.stage(&format!("{name}/project"), |r| {
            let layout = case_layout(&case.layout, geom, &mut r.seeds)?;
            r.write_json(&format!("{dir}/layout.json"), &layout)?;
            let mut images = project_views(truth, &layout)?;
            if let Some(noise) = &r.config.noise {
                images = apply_noise(&images, noise, &mut r.seeds)?;
            }
            for (im, pose) in images.iter().zip(&layout) {
                let path = r.out.path(&format!("{dir}/images/{}", img::file_name(im.view_id)));
                img::write(&path, im, Some(pose))?;
                r.out.record(&path);
                let path = path.with_extension("pgm");
                pgm::write(&path, im.rows(), im.cols(), im.pixels())?;
                r.out.record(&path);
            }
            Ok((layout, images))
        }) else {
            return report;
        };

        if let Some(art) = self.config.art {
            report.art = self.stage(&format!("{name}/art"), |r| {
                let config = seeded_art(&art, &mut r.seeds);
                let result = art_reconstruct(&images, &layout, geom, &config, Some(truth))?;
                r.write_grid(&format!("{dir}/art/recon.vxg"), &result.grid)?;
                r.write_log(&format!("{dir}/art/metrics.csv"), result.history.iter().map(LogRow::from).collect())?;
                r.export_slices(&format!("{dir}/art/slices"), &result.grid, truth)?;
                let similarity = cosine_similarity(result.grid.values(), truth.values())?;
                Ok(RunSummary::new(similarity, result.history.len(), None, target))
            });
        }

        let Some(train_config) = self.config.wernet else { return report };
        let Some(dataset) = self.stage(&format!("{name}/trace"), |r| {
            let options = dataset_options(r.config, &mut r.seeds);
            let ds = trace_views(geom, &layout, &images, options)?;
            if r.config.dataset.write_cache {
                let path = r.out.path(&format!("{dir}/dataset.rds"));
                rds::write(&path, &ds, geom.dims)?;
                r.out.record(&path);
            }
            Ok(ds)
        }) else {
            return report;
        };
        report.rays = Some(dataset.len());

        let scratch = config.transfer.as_ref().map_or(true, |t| t.scratch_baseline);
        if scratch {
            report.wernet = self.stage(&format!("{name}/wernet"), |r| {
                let config = seeded_train(&train_config, &mut r.seeds, seeds::WERNET);
                let mut obs = r.observer(format!("{name}/wernet"));
                let state = train(*geom, &dataset, &config, Some(truth), &mut obs)?;
                r.finish_training(&format!("{dir}/wernet"), &state, truth, &name, true)
            });
        }
        if let Some(encoder) = frozen {
            report.transfer = self.stage(&format!("{name}/transfer"), |r| {
                let config = seeded_train(&train_config, &mut r.seeds, seeds::TRANSFER);
                let mut obs = r.observer(format!("{name}/transfer"));
                let state = transfer_train(*geom, encoder, &dataset, &config, Some(truth), &mut obs)?;
                r.finish_training(&format!("{dir}/transfer"), &state, truth, &name, false)
            });
        }
        report
    }

    fn finish_training(
        &mut self,
        dir: &str,
        state: &TrainState,
        truth: &VoxelGrid,
        case: &str,
        checkpoint: bool,
    ) -> Result<RunSummary> {
        let grid = state.voxel_grid()?;
        self.write_grid(&format!("{dir}/recon.vxg"), &grid)?;
        self.write_log(&format!("{dir}/metrics.csv"), epoch_rows(&state.history).collect())?;
        let steps: Vec<LogRow> = step_rows(&state.history).collect();
        if !steps.is_empty() {
            self.write_log(&format!("{dir}/iterations.csv"), steps)?;
        }
        let summary = train_summary(state, truth, self.config.target_distance)?;
        if checkpoint {
            let provenance = serde_json::json!({
                "phantom": phantom_name(&self.config.phantom),
                "case": case,
                "master_seed": self.config.seed,
                "epochs": state.epoch,
                "steps": state.step,
                "final_similarity": summary.final_similarity,
            });
            let path = self.out.path(&format!("{dir}/encoder.wen"));
            wen::write(&path, &state.encoder, &provenance)?;
            self.out.record(&path);
        }
        self.export_slices(&format!("{dir}/slices"), &grid, truth)?;
        Ok(summary)
    }
}

/// Runs every stage of `config`, writing into `out_dir`, and returns the
/// manifest that was written there. Stage errors leave `status` failed.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, progress: bool) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut runner = Runner {
        config,
        out: Outputs {
            root: out_dir.to_owned(),
            written: Vec::new(),
        },
        seeds: SeedTable::new(config.seed),
        errors: Vec::new(),
        progress,
    };
    let mut cases = Vec::new();
    let prepared = runner.stage("phantom", |r| {
        let geom = r.config.grid.geometry()?;
        let seed = r.seeds.get(seeds::PHANTOM);
        let truth = r.config.phantom.build(geom, seed)?;
        r.write_grid("phantom.vxg", &truth)?;
        let frozen = match &r.config.transfer {
            Some(t) => Some(wen::read(&t.checkpoint)?.0),
            None => None,
        };
        Ok((geom, truth, frozen))
    });
    if let Some((geom, truth, frozen)) = prepared {
        for i in 0..config.cases.len() {
            cases.push(runner.run_case(i, &geom, &truth, frozen.as_ref()));
        }
    }
    let files = runner.out.entries()?;
    let manifest = Manifest {
        schema_version: crate::config::SCHEMA_VERSION,
        status: if runner.errors.is_empty() { Status::Ok } else { Status::Failed },
        config: config.clone(),
        seeds: runner.seeds,
        cases,
        files,
        errors: runner.errors,
    };
    let path = out_dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}
