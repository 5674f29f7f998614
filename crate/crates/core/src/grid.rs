//! Voxel grids: geometry plus a flattened, x-fastest intensity buffer.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{param_err, shape_err, Result};
use crate::vec3::Vec3;

/// Placement and resolution of a regular grid of cubic voxels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridGeometry {
    /// Voxel counts along x, y, z. y is the vertical (flame) axis.
    pub dims: [usize; 3],
    /// Edge length of one voxel, millimeters.
    pub voxel_size: f64,
    /// World position of the grid's min corner, millimeters.
    pub origin: Vec3,
}

impl GridGeometry {
    pub fn new(dims: [usize; 3], voxel_size: f64, origin: Vec3) -> Result<Self> {
        let g = Self {
            dims,
            voxel_size,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid whose center sits at the world origin.
    pub fn centered(dims: [usize; 3], voxel_size: f64) -> Result<Self> {
        let half = |d: usize| -0.5 * d as f64 * voxel_size;
        Self::new(
            dims,
            voxel_size,
            Vec3::new(half(dims[0]), half(dims[1]), half(dims[2])),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(param_err!("grid dims must be positive, got {:?}", self.dims));
        }
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(param_err!("voxel size must be positive, got {}", self.voxel_size));
        }
        if self.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none()
            || self.len() > u32::MAX as usize
        {
            return Err(param_err!("grid {:?} is too large", self.dims));
        }
        if !(self.origin.x.is_finite() && self.origin.y.is_finite() && self.origin.z.is_finite()) {
            return Err(param_err!("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical size of the grid along each axis.
    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f64 * self.voxel_size,
            self.dims[1] as f64 * self.voxel_size,
            self.dims[2] as f64 * self.voxel_size,
        )
    }

    pub fn max_corner(&self) -> Vec3 {
        self.origin + self.extent()
    }

    pub fn center(&self) -> Vec3 {
        self.origin + self.extent() * 0.5
    }

    /// Diameter of the sphere circumscribing the grid box.
    pub fn bounding_sphere_diameter(&self) -> f64 {
        self.extent().norm()
    }

    /// Flat index of voxel (i, j, k), x-fastest.
    #[inline]
    pub fn flat_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// World position of a voxel center.
    pub fn voxel_center(&self, [i, j, k]: [usize; 3]) -> Vec3 {
        let s = self.voxel_size;
        self.origin
            + Vec3::new(
                (i as f64 + 0.5) * s,
                (j as f64 + 0.5) * s,
                (k as f64 + 0.5) * s,
            )
    }
}

/// A scalar intensity field on a regular grid.
///
/// Values are stored as `f32`, matching the on-disk grid format, so a grid
/// survives a save/load round trip bit for bit. Arithmetic on them is done
/// in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    geometry: GridGeometry,
    values: Vec<f32>,
}

impl VoxelGrid {
    pub fn zeros(geometry: GridGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            values: vec![0.0; geometry.len()],
            geometry,
        })
    }

    /// Wraps a value buffer. Values must be finite and non-negative.
    pub fn from_values(geometry: GridGeometry, values: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(shape_err!(
                "grid {:?} needs {} values, got {}",
                geometry.dims,
                geometry.len(),
                values.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(param_err!(
                "voxel {} has invalid intensity {}",
                pos,
                values[pos]
            ));
        }
        Ok(Self { geometry, values })
    }

    /// Rounds an `f64` buffer to storage precision, clamping negatives to zero.
    pub fn from_f64(geometry: GridGeometry, values: &[f64]) -> Result<Self> {
        let v = values.iter().map(|&x| x.max(0.0) as f32).collect();
        Self::from_values(geometry, v)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, ijk: [usize; 3]) -> f32 {
        self.values[self.geometry.flat_index(ijk)]
    }

    pub fn set(&mut self, ijk: [usize; 3], value: f32) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(param_err!("invalid intensity {value}"));
        }
        let idx = self.geometry.flat_index(ijk);
        self.values[idx] = value;
        Ok(())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}
