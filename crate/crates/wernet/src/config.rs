//! Experiment configuration: versioned JSON, unknown keys rejected.
//!
//! Seeds embedded in nested sections (layout distances, ART shuffling, the
//! dataset shuffle, training) are ignored; the runner replaces them with
//! seeds derived from the master `seed`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wernet_core::art::ArtConfig;
use wernet_core::camera::LayoutSpec;
use wernet_core::phantom::{make_jet_flame, make_randomized_homogeneous, make_turbulent_flame, Cylinder, JetParams};
use wernet_core::train::TrainConfig;
use wernet_core::{GridGeometry, VoxelGrid};

use crate::error::{io_err, Error, Result};
use crate::formats::vxg;
use crate::slices::Axis;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; every component seed derives from it.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub phantom: PhantomSpec,
    /// One camera layout per case; every enabled method runs on every case.
    pub cases: Vec<CaseSpec>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub art: Option<ArtConfig>,
    #[serde(default)]
    pub wernet: Option<TrainConfig>,
    /// Frozen-encoder runs; needs `wernet` for the schedule.
    #[serde(default)]
    pub transfer: Option<TransferSpec>,
    #[serde(default)]
    pub slices: Option<SliceSpec>,
    /// Runs whose final distance falls below this are flagged as passing.
    #[serde(default)]
    pub target_distance: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub voxel_size_mm: f64,
}

impl GridSpec {
    /// Grid centered on the world origin.
    pub fn geometry(&self) -> Result<GridGeometry> {
        Ok(GridGeometry::centered(self.dims, self.voxel_size_mm)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSpec {
    Jet {
        #[serde(default)]
        params: JetParams,
    },
    Turbulent,
    Homogeneous,
    /// A `VXG1` file; its geometry must match `grid`.
    File { path: PathBuf },
}

impl PhantomSpec {
    pub fn build(&self, geom: GridGeometry, seed: u64) -> Result<VoxelGrid> {
        let grid = match self {
            Self::Jet { params } => make_jet_flame(geom, *params)?,
            Self::Turbulent => make_turbulent_flame(geom, seed)?,
            Self::Homogeneous => make_randomized_homogeneous(geom, seed, Cylinder::inscribed(&geom))?,
            Self::File { path } => {
                let grid = vxg::read(path)?;
                if grid.geometry() != &geom {
                    return Err(Error::Config(format!(
                        "{} has geometry {:?}, config asks for {:?}",
                        path.display(),
                        grid.geometry(),
                        geom
                    )));
                }
                grid
            }
        };
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    /// Used as a directory name.
    pub name: String,
    pub layout: LayoutSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation as a fraction of each image's maximum.
    pub fraction: f64,
    /// Clamp noisy pixels at zero.
    #[serde(default)]
    pub clamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub include_zero_pixels: bool,
    /// Also write the traced dataset as an `RDS1` cache.
    pub write_cache: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            include_zero_pixels: true,
            write_cache: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    /// `WEN1` checkpoint of the frozen encoder.
    pub checkpoint: PathBuf,
    /// Also train from scratch on each case, for comparison.
    #[serde(default = "yes")]
    pub scratch_baseline: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub axis: Axis,
    pub positions: Vec<usize>,
}

impl ExperimentConfig {
    /// Parses `text`; relative paths resolve against `base`.
    pub fn from_json(text: &str, origin: &Path, base: Option<&Path>) -> Result<Self> {
        let mut config: Self = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_owned(),
            source,
        })?;
        if let Some(base) = base {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_owned()));
        }
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let config = Self::from_json(&text, path, path.parent())?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PhantomSpec::File { path } = &mut self.phantom {
            fix(path);
        }
        if let Some(t) = &mut self.transfer {
            fix(&mut t.checkpoint);
        }
        if let Some(o) = &mut self.output_dir {
            fix(o);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.grid.geometry()?;
        if self.cases.is_empty() {
            return bad("at least one case is required".into());
        }
        let mut names = HashSet::new();
        for c in &self.cases {
            let ok = !c.name.is_empty()
                && c.name != "."
                && c.name != ".."
                && c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch));
            if !ok {
                return bad(format!("case name {:?} must be a plain file name", c.name));
            }
            if !names.insert(&c.name) {
                return bad(format!("duplicate case name {:?}", c.name));
            }
        }
        if let Some(n) = &self.noise {
            if !(n.fraction.is_finite() && n.fraction >= 0.0) {
                return bad(format!("noise fraction must be non-negative, got {}", n.fraction));
            }
        }
        if let Some(a) = &self.art {
            a.validate()?;
        }
        if let Some(w) = &self.wernet {
            w.validate()?;
        }
        if self.transfer.is_some() && self.wernet.is_none() {
            return bad("transfer needs a wernet section for its schedule".into());
        }
        if self.art.is_none() && self.wernet.is_none() {
            return bad("enable at least one of art, wernet".into());
        }
        if let Some(d) = self.target_distance {
            if !(d.is_finite() && d > 0.0) {
                return bad(format!("target_distance must be positive, got {d}"));
            }
        }
        if let Some(s) = &self.slices {
            for &p in &s.positions {
                let d = self.grid.dims[s.axis as usize];
                if p >= d {
                    return bad(format!("slice {} {p} outside 0..{d}", s.axis.name()));
                }
            }
        }
        if let PhantomSpec::File { path } = &self.phantom {
            if !path.is_file() {
                return Err(Error::MissingFile(path.clone()));
            }
        }
        if let Some(t) = &self.transfer {
            if !t.checkpoint.is_file() {
                return Err(Error::MissingFile(t.checkpoint.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "seed": 7,
        "grid": {"dims": [8, 16, 8], "voxel_size_mm": 0.5},
        "phantom": {"kind": "jet"},
        "cases": [{"name": "a", "layout": {"n_views": 3, "rows": 8, "cols": 16}}],
        "art": {"sweeps": 2}
    }"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        let c = ExperimentConfig::from_json(text, Path::new("test.json"), None)?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.cases[0].layout.n_views, 3);
        assert_eq!(c.cases[0].layout.focal_length, LayoutSpec::default().focal_length);
        assert_eq!(c.art.unwrap().sweeps, 2);
        assert_eq!(c.art.unwrap().relaxation, ArtConfig::default().relaxation);
        assert!(c.wernet.is_none());
        assert_eq!(c.phantom, PhantomSpec::Jet { params: JetParams::default() });
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for (from, to) in [
            (r#""seed": 7"#, r#""seed": 7, "sede": 1"#),
            (r#""voxel_size_mm": 0.5"#, r#""voxel_size_mm": 0.5, "spacing": 1"#),
            (r#""sweeps": 2"#, r#""sweeps": 2, "sweep": 2"#),
            (r#""n_views": 3"#, r#""n_views": 3, "views": 3"#),
            (r#""kind": "jet""#, r#""kind": "jet", "radius": 3"#),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(parse(&text), Err(Error::Json { .. })), "{to}");
        }
    }

    #[test]
    fn semantic_errors() {
        for (from, to) in [
            (r#""schema_version": 1"#, r#""schema_version": 2"#),
            (r#""name": "a""#, r#""name": "../a""#),
            (r#""art": {"sweeps": 2}"#, r#""noise": {"fraction": 0.1}"#),
            (r#""art": {"sweeps": 2}"#, r#""art": {"relaxation": 3.0}"#),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(parse(&text), Err(Error::Config(_) | Error::Core(_))), "{to}");
        }
        let text = MINIMAL.replace(r#""art": {"sweeps": 2}"#, r#""wernet": {}, "transfer": {"checkpoint": "/nonexistent/x.wen"}"#);
        assert!(matches!(parse(&text), Err(Error::MissingFile(_))));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/c.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/c.json"));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let text = MINIMAL.replace(r#"{"kind": "jet"}"#, r#"{"kind": "file", "path": "g.vxg"}"#);
        let c = ExperimentConfig::from_json(&text, Path::new("x"), Some(Path::new("/data"))).unwrap();
        assert_eq!(c.phantom, PhantomSpec::File { path: "/data/g.vxg".into() });
    }

    #[test]
    fn serializes_back_to_an_equal_config() {
        let c = parse(MINIMAL).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse(&text).unwrap(), c);
    }
}
