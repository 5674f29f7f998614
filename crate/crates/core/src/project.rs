//! Reference projections with segment-length weights, and detector noise.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::CameraPose;
use crate::error::{param_err, shape_err, Result};
use crate::grid::{GridGeometry, VoxelGrid};
use crate::trace::for_each_hit;

/// A detector image, row-major. Values are stored at `f32` like the image
/// file format.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub view_id: usize,
    rows: usize,
    cols: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(view_id: usize, rows: usize, cols: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(shape_err!(
                "{rows}x{cols} image needs {} pixels, got {}",
                rows * cols,
                pixels.len()
            ));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(param_err!("image pixels must be finite"));
        }
        Ok(Self {
            view_id,
            rows,
            cols,
            pixels,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.cols + col]
    }

    pub fn max_value(&self) -> f32 {
        self.pixels.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

/// Line integrals `sum(length * value)` of every detector pixel, in `f64`.
pub fn project_values<T>(geom: &GridGeometry, values: &[T], pose: &CameraPose) -> Result<Vec<f64>>
where
    T: Copy + Into<f64>,
{
    geom.validate()?;
    pose.validate()?;
    if values.len() != geom.len() {
        return Err(shape_err!(
            "{} values for a grid of {} voxels",
            values.len(),
            geom.len()
        ));
    }
    let frame = pose.frame();
    let mut out = Vec::with_capacity(pose.rows * pose.cols);
    for row in 0..pose.rows {
        for col in 0..pose.cols {
            let ray = pose.pixel_ray_unchecked(&frame, row, col);
            let mut acc = 0.0;
            for_each_hit(&ray, geom, |h| acc += h.length * values[h.flat].into());
            out.push(acc);
        }
    }
    Ok(out)
}

/// Projects `grid` onto the detector of `pose`.
pub fn forward_project(grid: &VoxelGrid, pose: &CameraPose, view_id: usize) -> Result<Image> {
    let px = project_values(grid.geometry(), grid.values(), pose)?;
    Image::new(
        view_id,
        pose.rows,
        pose.cols,
        px.into_iter().map(|p| p as f32).collect(),
    )
}

/// Adds i.i.d. Gaussian noise with standard deviation `fraction * max(image)`.
pub fn add_noise(image: &Image, fraction: f64, seed: u64, clamp: bool) -> Result<Image> {
    if image.pixels.is_empty() {
        return Err(param_err!("cannot add noise to an empty image"));
    }
    if !(fraction.is_finite() && fraction >= 0.0) {
        return Err(param_err!("noise fraction must be non-negative, got {fraction}"));
    }
    let sigma = fraction * (image.max_value().max(0.0) as f64);
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| param_err!("noise distribution: {e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = image
        .pixels
        .iter()
        .map(|&p| {
            let v = p as f64 + normal.sample(&mut rng);
            (if clamp { v.max(0.0) } else { v }) as f32
        })
        .collect();
    Image::new(image.view_id, image.rows, image.cols, pixels)
}
