//! Axis-aligned cross sections of a grid, exported as max-scaled PGMs.
//!
//! Slices are oriented for viewing: the vertical y axis runs bottom to top
//! where it appears, x runs left to right.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wernet_core::{Error as CoreError, VoxelGrid};

use crate::error::Result;
use crate::formats::pgm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

/// A 2-D section, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

/// Cut of `grid` at `position` along `axis`. Rows and columns are (z, x)
/// for a y cut, (y, z) for an x cut and (y, x) for a z cut, with y flipped.
pub fn slice(grid: &VoxelGrid, axis: Axis, position: usize) -> Result<Slice> {
    let [nx, ny, nz] = grid.dims();
    let d = grid.dims()[axis.index()];
    if position >= d {
        return Err(CoreError::Param(format!(
            "{} slice {position} outside 0..{d}",
            axis.name()
        ))
        .into());
    }
    let (rows, cols) = match axis {
        Axis::X => (ny, nz),
        Axis::Y => (nz, nx),
        Axis::Z => (ny, nx),
    };
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let ijk = match axis {
                Axis::X => [position, ny - 1 - r, c],
                Axis::Y => [c, position, r],
                Axis::Z => [c, ny - 1 - r, position],
            };
            values.push(grid.get(ijk));
        }
    }
    Ok(Slice { rows, cols, values })
}

/// `|a - b|` per pixel.
pub fn difference(a: &Slice, b: &Slice) -> Slice {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols), "slices differ in size");
    Slice {
        rows: a.rows,
        cols: a.cols,
        values: a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).collect(),
    }
}

/// Writes `{stem}_{axis}{pos}.pgm` per position, plus `..._diff.pgm` against
/// `reference` when given. Returns the written paths.
pub fn export_cross_sections(
    grid: &VoxelGrid,
    axis: Axis,
    positions: &[usize],
    reference: Option<&VoxelGrid>,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    if let Some(r) = reference {
        if r.dims() != grid.dims() {
            return Err(CoreError::Param(format!(
                "reference grid {:?} does not match {:?}",
                r.dims(),
                grid.dims()
            ))
            .into());
        }
    }
    let cuts = positions
        .iter()
        .map(|&p| Ok((p, slice(grid, axis, p)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut written = Vec::new();
    for (p, s) in cuts {
        let base = format!("{stem}_{}{p:03}", axis.name());
        let path = dir.join(format!("{base}.pgm"));
        pgm::write(&path, s.rows, s.cols, &s.values)?;
        written.push(path);
        if let Some(r) = reference {
            let diff = difference(&s, &slice(r, axis, p)?);
            let path = dir.join(format!("{base}_diff.pgm"));
            pgm::write(&path, diff.rows, diff.cols, &diff.values)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wernet_core::phantom::{make_jet_flame, JetParams};
    use wernet_core::GridGeometry;

    fn geom() -> GridGeometry {
        GridGeometry::centered([16, 64, 16], 0.5).unwrap()
    }

    #[test]
    fn orientation() {
        let mut g = VoxelGrid::zeros(GridGeometry::centered([2, 3, 4], 1.0).unwrap()).unwrap();
        g.set([1, 2, 3], 5.0).unwrap();
        let s = slice(&g, Axis::Z, 3).unwrap();
        assert_eq!((s.rows, s.cols), (3, 2));
        assert_eq!(s.values[1], 5.0);
        let s = slice(&g, Axis::X, 1).unwrap();
        assert_eq!((s.rows, s.cols), (3, 4));
        assert_eq!(s.values[3], 5.0);
        let s = slice(&g, Axis::Y, 2).unwrap();
        assert_eq!((s.rows, s.cols), (4, 2));
        assert_eq!(s.values[7], 5.0);
        assert!(slice(&g, Axis::Y, 3).is_err());
    }

    #[test]
    fn zero_grid_and_self_difference_are_black() {
        let dir = tempfile::tempdir().unwrap();
        let zero = VoxelGrid::zeros(geom()).unwrap();
        let jet = make_jet_flame(geom(), JetParams::default()).unwrap();
        let files = export_cross_sections(&zero, Axis::Y, &[0, 32], None, dir.path(), "zero").unwrap();
        assert_eq!(files.len(), 2);
        let files = export_cross_sections(&jet, Axis::Z, &[8], Some(&jet), dir.path(), "jet").unwrap();
        assert_eq!(files.len(), 2);
        for (path, all_black) in [
            (dir.path().join("zero_y000.pgm"), true),
            (dir.path().join("zero_y032.pgm"), true),
            (dir.path().join("jet_z008_diff.pgm"), true),
            (dir.path().join("jet_z008.pgm"), false),
        ] {
            let (_, _, levels) = pgm::decode(&std::fs::read(&path).unwrap()).unwrap();
            assert_eq!(levels.iter().all(|&l| l == 0), all_black, "{}", path.display());
        }
    }

    #[test]
    fn jet_mid_slice_is_mirror_symmetric() {
        let dir = tempfile::tempdir().unwrap();
        let jet = make_jet_flame(geom(), JetParams::default()).unwrap();
        export_cross_sections(&jet, Axis::Z, &[8], None, dir.path(), "jet").unwrap();
        let (rows, cols, levels) = pgm::decode(&std::fs::read(dir.path().join("jet_z008.pgm")).unwrap()).unwrap();
        assert_eq!((rows, cols), (64, 16));
        for r in 0..rows {
            for c in 0..cols / 2 {
                let a = levels[r * cols + c] as i32;
                let b = levels[r * cols + cols - 1 - c] as i32;
                assert!((a - b).abs() <= 1, "row {r} col {c}: {a} vs {b}");
            }
        }
        assert!(levels.iter().any(|&l| l == pgm::MAX_GRAY));
    }

    #[test]
    fn out_of_range_position_is_a_parameter_error() {
        let dir = tempfile::tempdir().unwrap();
        let jet = make_jet_flame(geom(), JetParams::default()).unwrap();
        let err = export_cross_sections(&jet, Axis::X, &[3, 16], None, dir.path(), "j").unwrap_err();
        assert!(matches!(err, crate::Error::Core(CoreError::Param(_))));
        assert!(!dir.path().join("j_x003.pgm").exists());
    }
}
