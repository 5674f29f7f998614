//! Reconstruction quality metrics.

use crate::error::{shape_err, Error, Result};
use crate::math;

/// Cosine similarity of two flattened voxel sets, accumulated in `f64`.
pub fn cosine_similarity<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if a.len() != b.len() {
        return Err(shape_err!("cannot compare {} voxels with {}", a.len(), b.len()));
    }
    let (mut dot, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::UndefinedMetric(
            "cosine similarity of an all-zero voxel set".into(),
        ));
    }
    Ok((dot / (math::sqrt(aa) * math::sqrt(bb))).clamp(-1.0, 1.0))
}

/// Cosine distance `1 - similarity`.
pub fn cosine_distance<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    cosine_similarity(a, b).map(|s| 1.0 - s)
}

/// One row of a reconstruction's metric history.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRecord {
    pub epoch: usize,
    pub loss: f64,
    pub similarity: f64,
    pub distance: f64,
    pub wall_ms: f64,
}

impl MetricRecord {
    pub fn new(epoch: usize, loss: f64, similarity: f64, wall_ms: f64) -> Self {
        Self {
            epoch,
            loss,
            similarity,
            distance: 1.0 - similarity,
            wall_ms,
        }
    }
}
