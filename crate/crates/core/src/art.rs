//! Classic algebraic reconstruction (row-action Kaczmarz) baseline.
//!
//! Weights are the segment lengths of each pixel's ray, recomputed by voxel
//! traversal whenever the ray is visited; no system matrix is ever stored.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraPose;
use crate::error::{param_err, shape_err, Error, Result};
use crate::grid::{GridGeometry, VoxelGrid};
use crate::metrics::cosine_similarity;
use crate::project::Image;
use crate::trace::for_each_hit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RayOrder {
    /// View by view, then row-major over the detector.
    Sequential,
    /// A fresh seeded permutation every sweep.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ArtConfig {
    /// Relaxation factor, in (0, 2).
    pub relaxation: f64,
    /// Full passes over all rays.
    pub sweeps: usize,
    /// Clamp voxels to be non-negative after every update.
    pub nonneg_clamp: bool,
    pub order: RayOrder,
}

impl Default for ArtConfig {
    fn default() -> Self {
        Self {
            relaxation: 0.2,
            sweeps: 50,
            nonneg_clamp: true,
            order: RayOrder::Sequential,
        }
    }
}

impl ArtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(param_err!("relaxation must lie in (0, 2), got {}", self.relaxation));
        }
        if self.sweeps == 0 {
            return Err(param_err!("ART needs at least one sweep"));
        }
        Ok(())
    }
}

/// Metrics after one full sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtSweep {
    pub sweep: usize,
    /// Sum of squared residuals over all rays that hit the grid.
    pub residual: f64,
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtResult {
    pub grid: VoxelGrid,
    /// Working values before rounding to grid storage.
    pub values: Vec<f64>,
    pub history: Vec<ArtSweep>,
}

/// One Kaczmarz row update. `weights` holds (voxel, weight) pairs. Returns
/// the residual before the update, or `None` if the row has no weight.
pub fn kaczmarz_update(
    values: &mut [f64],
    weights: &[(usize, f64)],
    target: f64,
    relaxation: f64,
    clamp: bool,
) -> Option<f64> {
    let (mut proj, mut norm2) = (0.0, 0.0);
    for &(j, w) in weights {
        proj += w * values[j];
        norm2 += w * w;
    }
    if norm2 == 0.0 {
        return None;
    }
    let residual = target - proj;
    let scale = relaxation * residual / norm2;
    for &(j, w) in weights {
        let v = values[j] + scale * w;
        values[j] = if clamp { v.max(0.0) } else { v };
    }
    Some(residual)
}

struct RayTable<'a> {
    geom: &'a GridGeometry,
    poses: &'a [CameraPose],
    images: &'a [Image],
}

impl RayTable<'_> {
    fn weights(&self, (view, row, col): (usize, usize, usize), buf: &mut Vec<(usize, f64)>) {
        buf.clear();
        let pose = &self.poses[view];
        let ray = pose.pixel_ray_unchecked(&pose.frame(), row, col);
        for_each_hit(&ray, self.geom, |h| buf.push((h.flat, h.length)));
    }

    fn target(&self, (view, row, col): (usize, usize, usize)) -> f64 {
        self.images[view].get(row, col) as f64
    }

    fn residual(&self, values: &[f64], rays: &[(usize, usize, usize)], buf: &mut Vec<(usize, f64)>) -> f64 {
        let mut ssr = 0.0;
        for &r in rays {
            self.weights(r, buf);
            if buf.is_empty() {
                continue;
            }
            let proj: f64 = buf.iter().map(|&(j, w)| w * values[j]).sum();
            let e = self.target(r) - proj;
            ssr += e * e;
        }
        ssr
    }
}

/// Reconstructs a grid from `images` taken at `layout`, starting from zero.
pub fn art_reconstruct(
    images: &[Image],
    layout: &[CameraPose],
    geom: &GridGeometry,
    config: &ArtConfig,
    ground_truth: Option<&VoxelGrid>,
) -> Result<ArtResult> {
    config.validate()?;
    geom.validate()?;
    if images.len() != layout.len() {
        return Err(param_err!("{} images for {} poses", images.len(), layout.len()));
    }
    for (pose, img) in layout.iter().zip(images) {
        pose.validate()?;
        if img.rows() != pose.rows || img.cols() != pose.cols {
            return Err(param_err!("image {} does not match its pose's detector", img.view_id));
        }
    }
    if let Some(gt) = ground_truth {
        if gt.geometry().dims != geom.dims {
            return Err(shape_err!("ground truth dims {:?} vs {:?}", gt.dims(), geom.dims));
        }
    }

    let table = RayTable {
        geom,
        poses: layout,
        images,
    };
    let mut buf = Vec::new();
    // Rays that miss the grid carry no equation; drop them once up front.
    let mut rays: Vec<(usize, usize, usize)> = Vec::new();
    for (view, pose) in layout.iter().enumerate() {
        for row in 0..pose.rows {
            for col in 0..pose.cols {
                table.weights((view, row, col), &mut buf);
                if !buf.is_empty() {
                    rays.push((view, row, col));
                }
            }
        }
    }
    if rays.is_empty() {
        return Err(Error::Reconstruction("no ray intersects the grid".into()));
    }

    let mut rng = match config.order {
        RayOrder::Shuffled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        RayOrder::Sequential => None,
    };
    let mut values = vec![0.0; geom.len()];
    let mut history = Vec::with_capacity(config.sweeps);
    for sweep in 0..config.sweeps {
        if let Some(rng) = rng.as_mut() {
            rays.shuffle(rng);
        }
        for &r in &rays {
            table.weights(r, &mut buf);
            kaczmarz_update(
                &mut values,
                &buf,
                table.target(r),
                config.relaxation,
                config.nonneg_clamp,
            );
        }
        let similarity = match ground_truth {
            Some(gt) => cosine_similarity(&values, gt.values()).ok(),
            None => None,
        };
        history.push(ArtSweep {
            sweep,
            residual: table.residual(&values, &rays, &mut buf),
            similarity,
        });
    }
    Ok(ArtResult {
        grid: VoxelGrid::from_f64(*geom, &values)?,
        values,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{build_layout, LayoutSpec};
    use crate::phantom::{make_jet_flame, JetParams};
    use crate::project::forward_project;
    use crate::vec3::Vec3;
    use rand::Rng;

    #[test]
    fn one_step_solves_a_single_voxel() {
        let g = GridGeometry::centered([1, 1, 1], 0.5).unwrap();
        let pose = CameraPose {
            view_angle: 90.0,
            pitch_angle: 0.0,
            distance: 100.0,
            look_at: Vec3::ZERO,
            rows: 1,
            cols: 1,
            focal_length: 50.0,
            pixel_pitch: 0.01,
        };
        let img = Image::new(0, 1, 1, vec![3.0]).unwrap();
        let cfg = ArtConfig {
            relaxation: 1.0,
            sweeps: 1,
            nonneg_clamp: false,
            order: RayOrder::Sequential,
        };
        let out = art_reconstruct(&[img], &[pose], &g, &cfg, None).unwrap();
        assert!((out.values[0] - 3.0 / 0.5).abs() < 1e-12);
    }

    #[test]
    fn row_residual_vanishes_after_unrelaxed_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let mut values = vec![0.0; 50];
        for _ in 0..40 {
            let start = rng.random_range(0..44);
            let row: Vec<(usize, f64)> = (start..start + 6)
                .map(|j| (j, rng.random::<f64>()))
                .collect();
            let target: f64 = row.iter().map(|&(j, w)| w * truth[j]).sum();
            kaczmarz_update(&mut values, &row, target, 1.0, false).unwrap();
            let after: f64 = row.iter().map(|&(j, w)| w * values[j]).sum();
            assert!((after - target).abs() < 1e-12 * target.max(1.0));
        }
    }

    #[test]
    fn zero_weight_row_is_skipped() {
        let mut v = vec![1.0];
        assert_eq!(kaczmarz_update(&mut v, &[], 2.0, 1.0, false), None);
        assert_eq!(kaczmarz_update(&mut v, &[(0, 0.0)], 2.0, 1.0, false), None);
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn invalid_configs_and_misses() {
        let g = GridGeometry::centered([2, 2, 2], 0.5).unwrap();
        assert!(ArtConfig {
            relaxation: 2.0,
            ..ArtConfig::default()
        }
        .validate()
        .is_err());
        assert!(ArtConfig {
            sweeps: 0,
            ..ArtConfig::default()
        }
        .validate()
        .is_err());
        let away = CameraPose {
            view_angle: 0.0,
            pitch_angle: 0.0,
            distance: 100.0,
            look_at: Vec3::new(50.0, 0.0, 0.0),
            rows: 2,
            cols: 2,
            focal_length: 50.0,
            pixel_pitch: 0.001,
        };
        let img = Image::new(0, 2, 2, vec![1.0; 4]).unwrap();
        let err = art_reconstruct(&[img], &[away], &g, &ArtConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::Reconstruction(_)));
    }

    #[test]
    fn noiseless_residual_decreases() {
        let g = GridGeometry::centered([8, 20, 8], 0.5).unwrap();
        let truth = make_jet_flame(g, JetParams::default()).unwrap();
        let spec = LayoutSpec {
            n_views: 6,
            view_angle_step: 30.0,
            rows: 24,
            cols: 64,
            ..LayoutSpec::default()
        };
        let poses = build_layout(&spec, &g).unwrap();
        let images: Vec<Image> = poses
            .iter()
            .enumerate()
            .map(|(v, p)| forward_project(&truth, p, v).unwrap())
            .collect();
        let cfg = ArtConfig {
            sweeps: 15,
            ..ArtConfig::default()
        };
        let out = art_reconstruct(&images, &poses, &g, &cfg, Some(&truth)).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1].residual <= w[0].residual, "{:?}", w);
        }
        let last = out.history.last().unwrap();
        assert!(last.similarity.unwrap() > out.history[0].similarity.unwrap());
    }
}
