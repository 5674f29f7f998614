//! Limited-view emission tomography without a precomputed weight matrix.
//!
//! The crate covers the whole numerical pipeline: synthetic voxel phantoms,
//! pinhole camera layouts, exact voxel traversal of per-pixel rays, reference
//! projection with segment-length weights, the classic row-action ART
//! baseline, and the weight-encoder reconstruction network in which voxel
//! intensities are trained directly alongside a small 1-D convolutional
//! encoder that predicts per-hit projection weights.
//!
//! Everything here is `no_std` + `alloc`. File formats, configuration and the
//! command line live in the `wernet` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod art;
pub mod camera;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod features;
pub mod grid;
mod math;
pub mod metrics;
pub mod optim;
pub mod phantom;
pub mod pixel;
pub mod project;
pub mod trace;
pub mod train;
pub mod vec3;

pub use error::{Error, Result};
pub use grid::{GridGeometry, VoxelGrid};
pub use vec3::Vec3;
