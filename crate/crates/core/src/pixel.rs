//! Voxel pooling, pixel prediction and the per-ray backward rule.
//!
//! With normalization enabled the voxel-value gradient of a ray is divided by
//! the Euclidean norm of that ray's weights, while the weight gradient keeps
//! the plain product-rule form.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::features::PaddedInput;
use crate::math;

/// Guard on the weight norm of an all-zero ray.
pub const NORM_EPSILON: f64 = 1e-12;

/// Voxel values along a ray, zero-extended to the ray's capacity.
pub fn voxel_pool(voxels: &[f64], input: &PaddedInput) -> Result<Vec<f64>> {
    let mut v = vec![0.0; input.capacity()];
    gather(voxels, input.hit_indices(), &mut v)?;
    Ok(v)
}

/// Values of the `n` hit voxels, written to the front of `out`.
pub fn gather(voxels: &[f64], indices: &[u32], out: &mut [f64]) -> Result<()> {
    for (o, &i) in out.iter_mut().zip(indices) {
        *o = *voxels.get(i as usize).ok_or(Error::Index {
            index: i as usize,
            len: voxels.len(),
        })?;
    }
    Ok(())
}

/// `sum_i w_i v_i`, accumulated in index order.
pub fn predict_pixel(w: &[f64], v: &[f64]) -> Result<f64> {
    if w.len() != v.len() {
        return Err(shape_err!("{} weights but {} voxel values", w.len(), v.len()));
    }
    Ok(dot(w, v))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn weight_norm(w: &[f64]) -> f64 {
    math::sqrt(dot(w, w))
}

/// Gradients `(g_v, g_w)` of one ray given the pixel gradient `g`. `w` is
/// the ray's full weight vector, padded positions included.
pub fn gradnorm_backward(g: f64, w: &[f64], v: &[f64], enabled: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    if w.len() != v.len() {
        return Err(shape_err!("{} weights but {} voxel values", w.len(), v.len()));
    }
    let norm = weight_norm(w);
    let g_v = w.iter().map(|&wi| voxel_grad(g, wi, norm, enabled)).collect();
    let g_w = v.iter().map(|vi| g * vi).collect();
    Ok((g_v, g_w))
}

/// One voxel's gradient given the ray's weight norm. The normalized value is
/// the plain product divided by the norm, so the two agree bitwise up to
/// that single division.
#[inline]
pub(crate) fn voxel_grad(g: f64, wi: f64, norm: f64, enabled: bool) -> f64 {
    if enabled {
        g * wi / norm.max(NORM_EPSILON)
    } else {
        g * wi
    }
}
