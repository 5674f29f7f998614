//! Pinhole camera poses, view layouts and per-pixel rays.
//!
//! Cameras orbit the vertical (y) axis of the grid. View angle is the azimuth
//! measured from +z toward +x; pitch is the elevation above the horizontal
//! plane. The detector's column axis is aligned with the projected vertical
//! so the tall grid lies along the long side of a wide detector; row index
//! increases along the camera's horizontal axis.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Result};
use crate::grid::GridGeometry;
use crate::math;
use crate::vec3::Vec3;

/// One pinhole view of the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CameraPose {
    /// Azimuth around the vertical axis, degrees.
    pub view_angle: f64,
    /// Elevation above the horizontal plane, degrees.
    pub pitch_angle: f64,
    /// Pinhole distance from `look_at`, millimeters.
    pub distance: f64,
    pub look_at: Vec3,
    pub rows: usize,
    pub cols: usize,
    /// Pinhole-to-detector distance, millimeters.
    pub focal_length: f64,
    /// Detector pixel edge, millimeters.
    pub pixel_pitch: f64,
}

/// A half-line from the pinhole into the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalized(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Orthonormal camera frame.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub pinhole: Vec3,
    /// Optical axis, from the pinhole toward `look_at`.
    pub forward: Vec3,
    /// Direction of increasing row index (horizontal).
    pub row_axis: Vec3,
    /// Direction of increasing column index (projected vertical).
    pub col_axis: Vec3,
}

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(param_err!("camera distance must be positive, got {}", self.distance));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(param_err!("detector must have at least one pixel"));
        }
        if !(self.focal_length > 0.0 && self.pixel_pitch > 0.0) {
            return Err(param_err!("focal length and pixel pitch must be positive"));
        }
        if !(self.view_angle.is_finite() && self.pitch_angle.is_finite()) {
            return Err(param_err!("camera angles must be finite"));
        }
        if self.pitch_angle.abs() >= 90.0 {
            return Err(param_err!("pitch angle must lie strictly between -90 and 90 degrees"));
        }
        Ok(())
    }

    pub fn frame(&self) -> CameraFrame {
        let az = math::to_radians(self.view_angle);
        let el = math::to_radians(self.pitch_angle);
        let offset = Vec3::new(
            math::sin(az) * math::cos(el),
            math::sin(el),
            math::cos(az) * math::cos(el),
        );
        let pinhole = self.look_at + offset * self.distance;
        let forward = -offset;
        let row_axis = forward.cross(Vec3::new(0.0, 1.0, 0.0)).normalized();
        let col_axis = row_axis.cross(forward).normalized();
        CameraFrame {
            pinhole,
            forward,
            row_axis,
            col_axis,
        }
    }

    pub fn pinhole(&self) -> Vec3 {
        self.frame().pinhole
    }

    /// The reversing ray from detector pixel (row, col) through the pinhole.
    pub fn pixel_ray(&self, row: usize, col: usize) -> Result<Ray> {
        if row >= self.rows || col >= self.cols {
            return Err(param_err!(
                "pixel ({row}, {col}) outside {}x{} detector",
                self.rows,
                self.cols
            ));
        }
        Ok(self.pixel_ray_unchecked(&self.frame(), row, col))
    }

    #[inline]
    pub(crate) fn pixel_ray_unchecked(&self, frame: &CameraFrame, row: usize, col: usize) -> Ray {
        let u = (row as f64 - 0.5 * (self.rows as f64 - 1.0)) * self.pixel_pitch;
        let v = (col as f64 - 0.5 * (self.cols as f64 - 1.0)) * self.pixel_pitch;
        let dir = frame.forward * self.focal_length + frame.row_axis * u + frame.col_axis * v;
        Ray::new(frame.pinhole, dir)
    }
}

/// Convenience alias for [`CameraPose::pixel_ray`].
pub fn pixel_ray(pose: &CameraPose, row: usize, col: usize) -> Result<Ray> {
    pose.pixel_ray(row, col)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PitchPattern {
    /// Same pitch for every view, degrees.
    Constant(f64),
    /// +p, -p, +p, ... degrees.
    Alternating(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DistanceMode {
    Fixed(f64),
    UniformRandom { min: f64, max: f64, seed: u64 },
}

/// Parametric description of a ring of cameras.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LayoutSpec {
    pub n_views: usize,
    pub view_angle_start: f64,
    pub view_angle_step: f64,
    pub pitch: PitchPattern,
    pub distance: DistanceMode,
    pub rows: usize,
    pub cols: usize,
    /// Ratio of the frame to the projected grid extent (> 1 leaves a border).
    pub fov_margin: f64,
    pub focal_length: f64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self {
            n_views: 33,
            view_angle_start: 0.0,
            view_angle_step: 11.0,
            pitch: PitchPattern::Constant(0.0),
            distance: DistanceMode::Fixed(5800.0),
            rows: 128,
            cols: 512,
            fov_margin: 1.2,
            focal_length: 50.0,
        }
    }
}

impl LayoutSpec {
    fn validate(&self) -> Result<()> {
        if self.n_views == 0 {
            return Err(param_err!("layout needs at least one view"));
        }
        if !(self.view_angle_start.is_finite() && self.view_angle_step.is_finite()) {
            return Err(param_err!("view angles must be finite"));
        }
        let p = match self.pitch {
            PitchPattern::Constant(p) | PitchPattern::Alternating(p) => p,
        };
        if !(p.is_finite() && p.abs() < 90.0) {
            return Err(param_err!("pitch {p} out of range"));
        }
        match self.distance {
            DistanceMode::Fixed(d) if !(d.is_finite() && d > 0.0) => {
                return Err(param_err!("distance must be positive, got {d}"))
            }
            DistanceMode::UniformRandom { min, max, .. }
                if !(min.is_finite() && max.is_finite() && min > 0.0 && min <= max) =>
            {
                return Err(param_err!("random distance range [{min}, {max}] is invalid"))
            }
            _ => {}
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(param_err!("detector must have at least one pixel"));
        }
        if !(self.fov_margin.is_finite() && self.fov_margin > 0.0) {
            return Err(param_err!("fov_margin must be positive"));
        }
        if !(self.focal_length.is_finite() && self.focal_length > 0.0) {
            return Err(param_err!("focal length must be positive"));
        }
        Ok(())
    }
}

/// Pixel pitch at which the grid fits the frame on both detector axes with
/// `fov_margin` to spare: the bounding sphere along the columns (vertical)
/// and the horizontal bounding circle along the rows.
pub fn fitted_pixel_pitch(
    geom: &GridGeometry,
    rows: usize,
    cols: usize,
    distance: f64,
    focal_length: f64,
    fov_margin: f64,
) -> f64 {
    let e = geom.extent();
    let vertical = geom.bounding_sphere_diameter() / cols as f64;
    let horizontal = math::sqrt(e.x * e.x + e.z * e.z) / rows as f64;
    fov_margin * vertical.max(horizontal) * focal_length / distance
}

/// Expands a layout spec into concrete poses looking at the grid center.
pub fn build_layout(spec: &LayoutSpec, geom: &GridGeometry) -> Result<Vec<CameraPose>> {
    spec.validate()?;
    geom.validate()?;
    let mut rng = match spec.distance {
        DistanceMode::UniformRandom { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        DistanceMode::Fixed(_) => None,
    };
    let poses = (0..spec.n_views)
        .map(|k| {
            let distance = match (spec.distance, rng.as_mut()) {
                (DistanceMode::UniformRandom { min, max, .. }, Some(rng)) => {
                    min + (max - min) * rng.random::<f64>()
                }
                (DistanceMode::Fixed(d), _) => d,
                _ => unreachable!(),
            };
            let pitch_angle = match spec.pitch {
                PitchPattern::Constant(p) => p,
                PitchPattern::Alternating(p) if k % 2 == 0 => p,
                PitchPattern::Alternating(p) => -p,
            };
            CameraPose {
                view_angle: spec.view_angle_start + k as f64 * spec.view_angle_step,
                pitch_angle,
                distance,
                look_at: geom.center(),
                rows: spec.rows,
                cols: spec.cols,
                focal_length: spec.focal_length,
                pixel_pitch: fitted_pixel_pitch(
                    geom,
                    spec.rows,
                    spec.cols,
                    distance,
                    spec.focal_length,
                    spec.fov_margin,
                ),
            }
        })
        .collect();
    Ok(poses)
}
