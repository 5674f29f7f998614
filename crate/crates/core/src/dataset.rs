//! Training set assembly: one padded input per retained detector pixel.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraPose;
use crate::error::{param_err, Error, Result};
use crate::features::{normalize_features, pad_sequence, FeatureColumn, PaddedInput};
use crate::grid::GridGeometry;
use crate::project::Image;
use crate::trace::{trace_impacting_voxels, PixelId};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DatasetOptions {
    /// Keep rays whose recorded pixel is exactly zero.
    pub include_zero_pixels: bool,
    /// Seed of the one-off shuffle applied after tracing.
    pub seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            include_zero_pixels: true,
            seed: 0,
        }
    }
}

/// A traced ray before the dataset-wide capacity is known.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedRay {
    pub pixel: PixelId,
    pub features: Vec<FeatureColumn>,
    pub indices: Vec<u32>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayDataset {
    rays: Vec<PaddedInput>,
    pixels: Vec<PixelId>,
    capacity: usize,
    seed: u64,
}

impl RayDataset {
    /// Reassembles a dataset, e.g. from a cache file.
    pub fn from_parts(rays: Vec<PaddedInput>, pixels: Vec<PixelId>, seed: u64) -> Result<Self> {
        if rays.len() != pixels.len() {
            return Err(param_err!("{} rays but {} pixel ids", rays.len(), pixels.len()));
        }
        let capacity = rays.iter().map(PaddedInput::len).max().unwrap_or(0);
        let rays = rays
            .into_iter()
            .map(|r| r.with_capacity(capacity))
            .collect::<Result<_>>()?;
        Ok(Self {
            rays,
            pixels,
            capacity,
            seed,
        })
    }

    pub fn rays(&self) -> &[PaddedInput] {
        &self.rays
    }

    /// Provenance of each ray.
    pub fn pixels(&self) -> &[PixelId] {
        &self.pixels
    }

    /// Sequence capacity `N`, the longest hit sequence in the set.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    /// Number of rays contributed by each view.
    pub fn per_view_counts(&self, n_views: usize) -> Vec<usize> {
        let mut counts = alloc::vec![0; n_views];
        for p in &self.pixels {
            if p.view < n_views {
                counts[p.view] += 1;
            }
        }
        counts
    }
}

fn check_image(pose: &CameraPose, image: &Image) -> Result<()> {
    if image.rows() != pose.rows || image.cols() != pose.cols {
        return Err(param_err!(
            "image {} is {}x{} but its pose has a {}x{} detector",
            image.view_id,
            image.rows(),
            image.cols(),
            pose.rows,
            pose.cols
        ));
    }
    Ok(())
}

/// Traces every pixel of one view, keeping rays that hit the grid (and, unless
/// `include_zero_pixels`, whose pixel is nonzero), in row-major order.
pub fn trace_view(
    geom: &GridGeometry,
    view: usize,
    pose: &CameraPose,
    image: &Image,
    include_zero_pixels: bool,
) -> Result<Vec<TracedRay>> {
    pose.validate()?;
    check_image(pose, image)?;
    let frame = pose.frame();
    let mut out = Vec::new();
    for row in 0..pose.rows {
        for col in 0..pose.cols {
            let target = image.get(row, col) as f64;
            if !include_zero_pixels && target == 0.0 {
                continue;
            }
            let ray = pose.pixel_ray_unchecked(&frame, row, col);
            let seq = trace_impacting_voxels(&ray, geom);
            if seq.is_empty() {
                continue;
            }
            out.push(TracedRay {
                pixel: PixelId { view, row, col },
                features: normalize_features(&seq.hits, geom),
                indices: seq.hits.iter().map(|h| h.flat as u32).collect(),
                target,
            });
        }
    }
    Ok(out)
}

/// Pads traced rays to their common capacity and applies the seeded shuffle.
/// `traced` must be in (view, row, col) order for the result to be
/// reproducible.
pub fn assemble(traced: Vec<TracedRay>, seed: u64) -> Result<RayDataset> {
    let capacity = traced.iter().map(|r| r.features.len()).max().unwrap_or(0);
    let mut order: Vec<usize> = (0..traced.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<TracedRay>> = traced.into_iter().map(Some).collect();
    let mut rays = Vec::with_capacity(order.len());
    let mut pixels = Vec::with_capacity(order.len());
    for i in order {
        let r = slots[i].take().expect("each ray is used once");
        pixels.push(r.pixel);
        rays.push(pad_sequence(r.features, r.indices, capacity, r.target)?);
    }
    Ok(RayDataset {
        rays,
        pixels,
        capacity,
        seed,
    })
}

/// Traces all views and assembles the training set.
pub fn build_dataset(
    geom: &GridGeometry,
    layout: &[CameraPose],
    images: &[Image],
    options: DatasetOptions,
) -> Result<RayDataset> {
    geom.validate()?;
    if layout.len() != images.len() {
        return Err(param_err!(
            "{} poses but {} images",
            layout.len(),
            images.len()
        ));
    }
    let mut traced = Vec::new();
    for (view, (pose, image)) in layout.iter().zip(images).enumerate() {
        traced.extend(trace_view(geom, view, pose, image, options.include_zero_pixels)?);
    }
    if traced.is_empty() {
        return Err(Error::EmptyDataset);
    }
    assemble(traced, options.seed)
}
