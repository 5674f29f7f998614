//! `RDS1` traced-dataset cache: `{"N","count","grid_dims","seed"}` then one
//! record per ray, `n`, view, row, col as `u32`, `n` hit indices as `u32`,
//! `n` feature columns of six `f64`, and the `f64` target.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wernet_core::dataset::RayDataset;
use wernet_core::features::{pad_sequence, FEATURES};
use wernet_core::trace::PixelId;

use super::{begin, open, read_bytes, write_bytes};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"RDS1";
const FORMAT: &str = "RDS1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(rename = "N")]
    capacity: usize,
    count: usize,
    grid_dims: [usize; 3],
    seed: u64,
}

pub fn encode(dataset: &RayDataset, grid_dims: [usize; 3]) -> Vec<u8> {
    let header = Header {
        capacity: dataset.capacity(),
        count: dataset.len(),
        grid_dims,
        seed: dataset.seed(),
    };
    let mut out = begin(MAGIC, &header, 0);
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    for (ray, px) in dataset.rays().iter().zip(dataset.pixels()) {
        u32le(&mut out, ray.len());
        u32le(&mut out, px.view);
        u32le(&mut out, px.row);
        u32le(&mut out, px.col);
        for &i in ray.hit_indices() {
            out.extend_from_slice(&i.to_le_bytes());
        }
        for col in ray.columns() {
            for f in col {
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
        out.extend_from_slice(&ray.target.to_le_bytes());
    }
    out
}

/// The dataset and the grid dims it was traced against.
pub fn decode(bytes: &[u8]) -> Result<(RayDataset, [usize; 3])> {
    let (h, mut r): (Header, _) = open(FORMAT, MAGIC, bytes)?;
    let voxels: usize = h.grid_dims.iter().product();
    let mut rays = Vec::with_capacity(h.count.min(bytes.len() / 16));
    let mut pixels = Vec::with_capacity(rays.capacity());
    let mut longest = 0;
    for _ in 0..h.count {
        let at = r.pos();
        let n = r.u32()? as usize;
        if n > h.capacity {
            return Err(r.error_at(at, format!("{n} hits exceed N = {}", h.capacity)));
        }
        longest = longest.max(n);
        let view = r.u32()? as usize;
        let row = r.u32()? as usize;
        let col = r.u32()? as usize;
        let mut indices = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.pos();
            let i = r.u32()?;
            if i as usize >= voxels {
                return Err(r.error_at(at, format!("voxel index {i} outside the grid")));
            }
            indices.push(i);
        }
        let mut columns = Vec::with_capacity(n);
        for _ in 0..n {
            let mut c = [0.0; FEATURES];
            for f in &mut c {
                *f = r.f64()?;
            }
            columns.push(c);
        }
        let target = r.f64()?;
        rays.push(pad_sequence(columns, indices, h.capacity, target).map_err(|e| r.error_at(at, e.to_string()))?);
        pixels.push(PixelId { view, row, col });
    }
    if longest != h.capacity {
        return Err(r.error_at(8, format!("N = {} but the longest ray has {longest} hits", h.capacity)));
    }
    r.finish()?;
    Ok((RayDataset::from_parts(rays, pixels, h.seed)?, h.grid_dims))
}

pub fn write(path: &Path, dataset: &RayDataset, grid_dims: [usize; 3]) -> Result<()> {
    write_bytes(path, &encode(dataset, grid_dims))
}

pub fn read(path: &Path) -> Result<(RayDataset, [usize; 3])> {
    decode(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use wernet_core::camera::{build_layout, LayoutSpec};
    use wernet_core::dataset::{build_dataset, DatasetOptions};
    use wernet_core::phantom::{make_jet_flame, JetParams};
    use wernet_core::project::forward_project;
    use wernet_core::GridGeometry;

    fn dataset() -> (RayDataset, [usize; 3]) {
        let g = GridGeometry::centered([6, 12, 6], 0.5).unwrap();
        let grid = make_jet_flame(g, JetParams::default()).unwrap();
        let spec = LayoutSpec {
            n_views: 2,
            rows: 6,
            cols: 12,
            ..LayoutSpec::default()
        };
        let poses = build_layout(&spec, &g).unwrap();
        let images: Vec<_> = poses.iter().enumerate().map(|(v, p)| forward_project(&grid, p, v).unwrap()).collect();
        let options = DatasetOptions {
            seed: 11,
            ..DatasetOptions::default()
        };
        (build_dataset(&g, &poses, &images, options).unwrap(), g.dims)
    }

    #[test]
    fn round_trip_is_exact() {
        let (ds, dims) = dataset();
        let bytes = encode(&ds, dims);
        let (back, back_dims) = decode(&bytes).unwrap();
        assert_eq!(back_dims, dims);
        assert_eq!(back, ds);
        assert_eq!(encode(&back, dims), bytes);
    }

    #[test]
    fn out_of_grid_index_is_rejected() {
        let (ds, _) = dataset();
        let bytes = encode(&ds, [1, 1, 1]);
        assert!(matches!(decode(&bytes), Err(Error::Format { .. })));
    }
}
