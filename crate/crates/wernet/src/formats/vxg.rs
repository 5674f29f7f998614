//! `VXG1` voxel grids: `{"dims","voxel_size_mm","origin_mm"}` then `f32`
//! intensities, x-fastest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wernet_core::{GridGeometry, Vec3, VoxelGrid};

use super::{begin, open, put_f32s, read_bytes, write_bytes};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"VXG1";
const FORMAT: &str = "VXG1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dims: [usize; 3],
    voxel_size_mm: f64,
    origin_mm: [f64; 3],
}

pub fn encode(grid: &VoxelGrid) -> Vec<u8> {
    let g = grid.geometry();
    let header = Header {
        dims: g.dims,
        voxel_size_mm: g.voxel_size,
        origin_mm: g.origin.to_array(),
    };
    let mut out = begin(MAGIC, &header, 4 * grid.values().len());
    put_f32s(&mut out, grid.values().iter().copied());
    out
}

pub fn decode(bytes: &[u8]) -> Result<VoxelGrid> {
    let (h, mut r): (Header, _) = open(FORMAT, MAGIC, bytes)?;
    let geometry = GridGeometry::new(h.dims, h.voxel_size_mm, Vec3::from_array(h.origin_mm))
        .map_err(|e| r.error_at(8, e.to_string()))?;
    let start = r.pos();
    let values = r.f32s(geometry.len())?;
    if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(r.error_at(start + 4 * i, format!("invalid intensity {}", values[i])));
    }
    r.finish()?;
    Ok(VoxelGrid::from_values(geometry, values)?)
}

pub fn write(path: &Path, grid: &VoxelGrid) -> Result<()> {
    write_bytes(path, &encode(grid))
}

pub fn read(path: &Path) -> Result<VoxelGrid> {
    decode(&read_bytes(path)?)
}
