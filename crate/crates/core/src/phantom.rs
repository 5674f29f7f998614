//! Deterministic synthetic emission fields used as ground truth.
//!
//! All generators are pure functions of their arguments and normalize their
//! output so the brightest voxel equals 1.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Result};
use crate::grid::{GridGeometry, VoxelGrid};
use crate::math;

/// Width of the jet's axial envelope, as a fraction of the grid height.
const AXIAL_SIGMA_FRACTION: f64 = 0.3;
/// Coarse lattice resolution of the turbulence modulation.
pub const NOISE_LATTICE: usize = 8;
/// Values below this fraction of the maximum are zeroed in turbulent fields.
const TURBULENT_THRESHOLD: f64 = 0.05;
/// Fill range of the randomized homogeneous phantom.
pub const HOMOGENEOUS_RANGE: (f64, f64) = (0.2, 1.0);

/// Shape parameters of the axisymmetric jet flame.
///
/// All three are fractions in (0, 1]: the hollow-cone radius at the nozzle
/// and the radial spread relative to the bounding-cylinder radius, and the
/// height of the axial peak relative to the grid height.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct JetParams {
    pub core_radius_fraction: f64,
    pub axial_peak_fraction: f64,
    pub radial_sigma_fraction: f64,
}

impl Default for JetParams {
    fn default() -> Self {
        Self {
            core_radius_fraction: 0.5,
            axial_peak_fraction: 0.6,
            radial_sigma_fraction: 0.2,
        }
    }
}

impl JetParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("core_radius_fraction", self.core_radius_fraction),
            ("axial_peak_fraction", self.axial_peak_fraction),
            ("radial_sigma_fraction", self.radial_sigma_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(param_err!("{name} must lie in (0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// Vertical cylinder (axis parallel to y) in world millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Cylinder {
    pub center_x: f64,
    pub center_z: f64,
    pub radius: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Cylinder {
    /// The largest vertical cylinder inscribed in the grid box.
    pub fn inscribed(geom: &GridGeometry) -> Self {
        let c = geom.center();
        let e = geom.extent();
        Self {
            center_x: c.x,
            center_z: c.z,
            radius: 0.5 * e.x.min(e.z),
            y_min: geom.origin.y,
            y_max: geom.origin.y + e.y,
        }
    }

    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let dx = x - self.center_x;
        let dz = z - self.center_z;
        dx * dx + dz * dz <= self.radius * self.radius && y >= self.y_min && y <= self.y_max
    }

    fn fits_in(&self, geom: &GridGeometry) -> bool {
        let lo = geom.origin;
        let hi = geom.max_corner();
        let tol = 1e-9 * geom.voxel_size;
        self.radius > 0.0
            && self.y_max > self.y_min
            && self.center_x - self.radius >= lo.x - tol
            && self.center_x + self.radius <= hi.x + tol
            && self.center_z - self.radius >= lo.z - tol
            && self.center_z + self.radius <= hi.z + tol
            && self.y_min >= lo.y - tol
            && self.y_max <= hi.y + tol
    }
}

/// Unnormalized jet intensity at voxel (i, j, k).
fn jet_value(geom: &GridGeometry, params: &JetParams, [i, j, k]: [usize; 3]) -> f64 {
    let s = geom.voxel_size;
    let [nx, ny, nz] = geom.dims;
    let radius = 0.5 * (nx.min(nz) as f64) * s;
    let height = ny as f64 * s;
    let dx = (i as f64 + 0.5) * s - 0.5 * nx as f64 * s;
    let dz = (k as f64 + 0.5) * s - 0.5 * nz as f64 * s;
    let r = math::sqrt(dx * dx + dz * dz);
    if r > radius {
        return 0.0;
    }
    let y = (j as f64 + 0.5) * s;
    let y_peak = params.axial_peak_fraction * height;
    // Hollow cone: widest at the nozzle, closed from the axial peak upward.
    let r0 = params.core_radius_fraction * radius * ((y_peak - y) / y_peak).max(0.0);
    let sigma = params.radial_sigma_fraction * radius;
    let axial_sigma = AXIAL_SIGMA_FRACTION * height;
    let env = math::exp(-(y - y_peak) * (y - y_peak) / (2.0 * axial_sigma * axial_sigma));
    env * math::exp(-(r - r0) * (r - r0) / (2.0 * sigma * sigma))
}

fn normalized(geom: GridGeometry, mut values: Vec<f64>) -> Result<VoxelGrid> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    VoxelGrid::from_f64(geom, &values)
}

fn jet_field(geom: &GridGeometry, params: &JetParams) -> Vec<f64> {
    (0..geom.len())
        .map(|idx| jet_value(geom, params, geom.unflatten(idx)))
        .collect()
}

/// Axisymmetric jet flame around the vertical axis through the grid center.
pub fn make_jet_flame(geom: GridGeometry, params: JetParams) -> Result<VoxelGrid> {
    geom.validate()?;
    params.validate()?;
    normalized(geom, jet_field(&geom, &params))
}

/// Trilinearly interpolated random lattice values in [0, 1).
fn value_noise(geom: &GridGeometry, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const L: usize = NOISE_LATTICE;
    let lattice: Vec<f64> = (0..L * L * L).map(|_| rng.random::<f64>()).collect();
    let at = |a: usize, b: usize, c: usize| lattice[a + L * (b + L * c)];
    let coord = |idx: usize, dim: usize| -> (usize, f64) {
        let u = (idx as f64 + 0.5) / dim as f64 * (L - 1) as f64;
        let base = (math::floor(u) as usize).min(L - 2);
        (base, u - base as f64)
    };
    let mut out = vec![0.0; geom.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let [i, j, k] = geom.unflatten(idx);
        let (a, fa) = coord(i, geom.dims[0]);
        let (b, fb) = coord(j, geom.dims[1]);
        let (c, fc) = coord(k, geom.dims[2]);
        let mut acc = 0.0;
        for (da, wa) in [(0, 1.0 - fa), (1, fa)] {
            for (db, wb) in [(0, 1.0 - fb), (1, fb)] {
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    acc += wa * wb * wc * at(a + da, b + db, c + dc);
                }
            }
        }
        *o = acc;
    }
    out
}

/// Jet base field modulated by seeded lattice noise, thresholded and
/// renormalized. Disordered and asymmetric, but still confined to the jet's
/// bounding cylinder.
pub fn make_turbulent_flame(geom: GridGeometry, seed: u64) -> Result<VoxelGrid> {
    geom.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = jet_field(&geom, &JetParams::default());
    let noise = value_noise(&geom, &mut rng);
    let mut values: Vec<f64> = base
        .iter()
        .zip(&noise)
        .map(|(b, n)| b * (0.5 + n))
        .collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    for v in &mut values {
        if *v < TURBULENT_THRESHOLD * max {
            *v = 0.0;
        }
    }
    normalized(geom, values)
}

/// Independent uniform intensities inside `region`, zero elsewhere.
pub fn make_randomized_homogeneous(
    geom: GridGeometry,
    seed: u64,
    region: Cylinder,
) -> Result<VoxelGrid> {
    geom.validate()?;
    if !region.fits_in(&geom) {
        return Err(param_err!("fill cylinder {region:?} does not fit inside the grid"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = HOMOGENEOUS_RANGE;
    let values: Vec<f64> = (0..geom.len())
        .map(|idx| {
            let c = geom.voxel_center(geom.unflatten(idx));
            if region.contains(c.x, c.y, c.z) {
                lo + (hi - lo) * rng.random::<f64>()
            } else {
                0.0
            }
        })
        .collect();
    VoxelGrid::from_f64(geom, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::cosine_similarity;

    fn full_scale_geom() -> GridGeometry {
        GridGeometry::centered([30, 140, 30], 0.5).unwrap()
    }

    #[test]
    fn jet_peak_is_on_axis_and_normalized() {
        // Odd cross-section puts a voxel center on the axis; 0.625 * 50 mm
        // places the axial peak on the center of row 62.
        let geom = GridGeometry::centered([31, 100, 31], 0.5).unwrap();
        let params = JetParams {
            axial_peak_fraction: 0.625,
            ..JetParams::default()
        };
        let grid = make_jet_flame(geom, params).unwrap();
        assert_eq!(grid.get([15, 62, 15]), 1.0);
        assert_eq!(grid.max_value(), 1.0);
        let full = make_jet_flame(full_scale_geom(), JetParams::default()).unwrap();
        assert_eq!(full.max_value(), 1.0);
    }

    #[test]
    fn jet_is_zero_outside_bounding_cylinder() {
        let geom = full_scale_geom();
        let grid = make_jet_flame(geom, JetParams::default()).unwrap();
        let cyl = Cylinder::inscribed(&geom);
        for idx in 0..geom.len() {
            let ijk = geom.unflatten(idx);
            let c = geom.voxel_center(ijk);
            if !cyl.contains(c.x, c.y, c.z) {
                assert_eq!(grid.values()[idx], 0.0, "voxel {ijk:?}");
            }
        }
        assert_eq!(grid.get([0, 70, 0]), 0.0);
    }

    #[test]
    fn jet_has_quarter_turn_symmetry() {
        let geom = full_scale_geom();
        let grid = make_jet_flame(geom, JetParams::default()).unwrap();
        for j in (0..140).step_by(7) {
            for i in 0..30 {
                for k in 0..30 {
                    let a = grid.get([i, j, k]);
                    let b = grid.get([k, j, 29 - i]);
                    assert!((a - b).abs() <= 1e-6, "({i},{j},{k}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn jet_rejects_bad_fractions() {
        let geom = full_scale_geom();
        let bad = JetParams {
            axial_peak_fraction: 0.0,
            ..JetParams::default()
        };
        assert!(make_jet_flame(geom, bad).is_err());
        let bad = JetParams {
            radial_sigma_fraction: 1.5,
            ..JetParams::default()
        };
        assert!(make_jet_flame(geom, bad).is_err());
    }

    #[test]
    fn turbulent_is_seeded_and_bounded() {
        let geom = GridGeometry::centered([16, 64, 16], 0.5).unwrap();
        let a = make_turbulent_flame(geom, 7).unwrap();
        let b = make_turbulent_flame(geom, 7).unwrap();
        assert_eq!(a, b);
        let c = make_turbulent_flame(geom, 8).unwrap();
        let s = cosine_similarity(a.values(), c.values()).unwrap();
        assert!(s < 0.999, "different seeds gave similarity {s}");
        assert_eq!(a.max_value(), 1.0);
        assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn homogeneous_fill_statistics() {
        let geom = full_scale_geom();
        let cyl = Cylinder::inscribed(&geom);
        let grid = make_randomized_homogeneous(geom, 3, cyl).unwrap();
        let mut inside = Vec::new();
        for idx in 0..geom.len() {
            let c = geom.voxel_center(geom.unflatten(idx));
            let v = grid.values()[idx];
            if cyl.contains(c.x, c.y, c.z) {
                inside.push(v as f64);
            } else {
                assert_eq!(v, 0.0);
            }
        }
        assert!(inside.len() >= 10_000);
        assert!(inside.iter().all(|&v| (0.2..=1.0).contains(&v)));
        let mean = inside.iter().sum::<f64>() / inside.len() as f64;
        assert!((mean - 0.6).abs() < 0.02, "mean {mean}");
        assert_eq!(grid, make_randomized_homogeneous(geom, 3, cyl).unwrap());
    }

    #[test]
    fn homogeneous_rejects_cylinder_outside_grid() {
        let geom = full_scale_geom();
        let mut cyl = Cylinder::inscribed(&geom);
        cyl.center_x += 1.0;
        assert!(make_randomized_homogeneous(geom, 0, cyl).is_err());
    }
}
