//! Encoder inputs: normalized hit features padded to a fixed capacity.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::grid::GridGeometry;
use crate::trace::Hit;

/// Feature rows per hit: three voxel indices then three seg-point coordinates.
pub const FEATURES: usize = 6;
/// Index stored in padded positions.
pub const PAD_INDEX: u32 = u32::MAX;

/// One hit's six features, all in [-1, 1].
pub type FeatureColumn = [f64; FEATURES];

#[inline]
fn affine(x: f64, lo: f64, span: f64) -> f64 {
    if span <= 0.0 {
        0.0
    } else {
        (2.0 * (x - lo) / span - 1.0).clamp(-1.0, 1.0)
    }
}

/// Maps voxel indices from [0, dim-1] and seg points from the grid box to
/// [-1, 1], one column per hit.
pub fn normalize_features(hits: &[Hit], geom: &GridGeometry) -> Vec<FeatureColumn> {
    let extent = geom.extent();
    hits.iter()
        .map(|h| {
            let mut col = [0.0; FEATURES];
            for a in 0..3 {
                col[a] = affine(h.voxel[a] as f64, 0.0, geom.dims[a] as f64 - 1.0);
                col[3 + a] = affine(h.seg_point[a], geom.origin[a], extent[a]);
            }
            col
        })
        .collect()
}

/// A ray's encoder input: a 6 x `capacity` feature matrix whose columns past
/// `n` are the zero extension, the hit voxel indices, and the recorded pixel.
///
/// Only the `n` real columns are stored; padded columns and indices read back
/// as exact zeros and [`PAD_INDEX`].
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedInput {
    capacity: usize,
    columns: Vec<FeatureColumn>,
    indices: Vec<u32>,
    pub target: f64,
}

impl PaddedInput {
    /// Number of real hits, `n`.
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Sequence capacity `N`.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// The `n` real feature columns.
    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    /// The `n` real voxel indices.
    pub fn hit_indices(&self) -> &[u32] {
        &self.indices
    }

    /// Feature `row` of column `col`; zero for padded columns.
    pub fn feature(&self, row: usize, col: usize) -> f64 {
        assert!(row < FEATURES && col < self.capacity);
        self.columns.get(col).map_or(0.0, |c| c[row])
    }

    pub fn index(&self, col: usize) -> u32 {
        assert!(col < self.capacity);
        self.indices.get(col).copied().unwrap_or(PAD_INDEX)
    }

    /// Dense 6 x N matrix, row-major.
    pub fn to_matrix(&self) -> Vec<f64> {
        let mut m = vec![0.0; FEATURES * self.capacity];
        for (j, c) in self.columns.iter().enumerate() {
            for (r, &v) in c.iter().enumerate() {
                m[r * self.capacity + j] = v;
            }
        }
        m
    }

    /// Reads the first `n` columns of a dense 6 x N row-major matrix. Padded
    /// columns are discarded whatever they contain.
    pub fn from_matrix(matrix: &[f64], capacity: usize, indices: &[u32], target: f64) -> Result<Self> {
        if matrix.len() != FEATURES * capacity {
            return Err(shape_err!(
                "feature matrix has {} entries, expected {FEATURES} x {capacity}",
                matrix.len()
            ));
        }
        let n = indices.len();
        let columns = (0..n.min(capacity))
            .map(|j| core::array::from_fn(|r| matrix[r * capacity + j]))
            .collect();
        pad_sequence(columns, indices.to_vec(), capacity, target)
    }

    /// Same ray with a larger capacity.
    pub fn with_capacity(mut self, capacity: usize) -> Result<Self> {
        if self.len() > capacity {
            return Err(Error::Capacity {
                n: self.len(),
                capacity,
            });
        }
        self.capacity = capacity;
        Ok(self)
    }
}

/// Zero-extends `n` feature columns to capacity `capacity`.
pub fn pad_sequence(
    features: Vec<FeatureColumn>,
    indices: Vec<u32>,
    capacity: usize,
    target: f64,
) -> Result<PaddedInput> {
    if features.len() != indices.len() {
        return Err(shape_err!(
            "{} feature columns but {} indices",
            features.len(),
            indices.len()
        ));
    }
    if features.len() > capacity {
        return Err(Error::Capacity {
            n: features.len(),
            capacity,
        });
    }
    if indices.iter().any(|&i| i == PAD_INDEX) {
        return Err(shape_err!("real hits may not use the padding index"));
    }
    Ok(PaddedInput {
        capacity,
        columns: features,
        indices,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Ray;
    use crate::trace::trace_impacting_voxels;
    use crate::vec3::Vec3;

    fn col(v: f64) -> FeatureColumn {
        [v; FEATURES]
    }

    #[test]
    fn index_endpoints_and_center() {
        let g = GridGeometry::centered([30, 4, 5], 0.5).unwrap();
        let hits = [
            Hit {
                voxel: [0, 0, 0],
                flat: 0,
                seg_point: g.center(),
                length: 0.5,
            },
            Hit {
                voxel: [29, 3, 4],
                flat: g.flat_index([29, 3, 4]),
                seg_point: g.origin,
                length: 0.5,
            },
        ];
        let f = normalize_features(&hits, &g);
        assert_eq!(&f[0][..3], &[-1.0, -1.0, -1.0]);
        assert_eq!(&f[1][..3], &[1.0, 1.0, 1.0]);
        for a in 3..6 {
            assert!(f[0][a].abs() < 1e-12);
            assert_eq!(f[1][a], -1.0);
        }
    }

    #[test]
    fn traced_features_are_bounded() {
        let g = GridGeometry::centered([7, 9, 5], 0.5).unwrap();
        let ray = Ray::new(Vec3::new(-9.0, -7.0, -5.0), Vec3::new(1.0, 0.9, 0.4));
        let seq = trace_impacting_voxels(&ray, &g);
        assert!(!seq.is_empty());
        for c in normalize_features(&seq.hits, &g) {
            assert!(c.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn padding_identity_and_zero_cases() {
        let full = pad_sequence(vec![col(0.5); 3], vec![1, 2, 3], 3, 1.0).unwrap();
        assert_eq!(full.len(), full.capacity());
        assert_eq!(full.feature(2, 2), 0.5);

        let empty = pad_sequence(vec![], vec![], 4, 0.0).unwrap();
        assert!(empty.to_matrix().iter().all(|&v| v == 0.0));
        assert_eq!(empty.index(0), PAD_INDEX);

        let p = pad_sequence(vec![col(0.25); 3], vec![4, 5, 6], 5, 0.0).unwrap();
        let m = p.to_matrix();
        for r in 0..FEATURES {
            assert_eq!(m[r * 5 + 2], 0.25);
            assert_eq!(m[r * 5 + 3], 0.0);
            assert_eq!(m[r * 5 + 4], 0.0);
        }
        assert_eq!(p.index(3), PAD_INDEX);
        assert_eq!(p.index(4), PAD_INDEX);
    }

    #[test]
    fn over_capacity_is_an_error() {
        let err = pad_sequence(vec![col(0.0); 4], vec![0, 1, 2, 3], 3, 0.0).unwrap_err();
        assert_eq!(err, Error::Capacity { n: 4, capacity: 3 });
    }
}
