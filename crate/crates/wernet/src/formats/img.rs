//! `IMG1` detector images: `{"view_id","rows","cols","pose"}` then `f32`
//! pixels, row-major. `pose` is an optional summary of the camera.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wernet_core::camera::CameraPose;
use wernet_core::project::Image;

use super::{begin, open, put_f32s, read_bytes, write_bytes};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"IMG1";
const FORMAT: &str = "IMG1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSummary {
    pub view_angle_deg: f64,
    pub pitch_angle_deg: f64,
    pub distance_mm: f64,
    pub focal_length_mm: f64,
    pub pixel_pitch_mm: f64,
}

impl From<&CameraPose> for PoseSummary {
    fn from(p: &CameraPose) -> Self {
        Self {
            view_angle_deg: p.view_angle,
            pitch_angle_deg: p.pitch_angle,
            distance_mm: p.distance,
            focal_length_mm: p.focal_length,
            pixel_pitch_mm: p.pixel_pitch,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    view_id: usize,
    rows: usize,
    cols: usize,
    #[serde(default)]
    pose: Option<PoseSummary>,
}

pub fn encode(image: &Image, pose: Option<&CameraPose>) -> Vec<u8> {
    let header = Header {
        view_id: image.view_id,
        rows: image.rows(),
        cols: image.cols(),
        pose: pose.map(PoseSummary::from),
    };
    let mut out = begin(MAGIC, &header, 4 * image.pixels().len());
    put_f32s(&mut out, image.pixels().iter().copied());
    out
}

pub fn decode(bytes: &[u8]) -> Result<(Image, Option<PoseSummary>)> {
    let (h, mut r): (Header, _) = open(FORMAT, MAGIC, bytes)?;
    let n = h
        .rows
        .checked_mul(h.cols)
        .ok_or_else(|| r.error_at(8, "image size overflows"))?;
    let start = r.pos();
    let pixels = r.f32s(n)?;
    if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
        return Err(r.error_at(start + 4 * i, "non-finite pixel"));
    }
    r.finish()?;
    Ok((Image::new(h.view_id, h.rows, h.cols, pixels)?, h.pose))
}

pub fn write(path: &Path, image: &Image, pose: Option<&CameraPose>) -> Result<()> {
    write_bytes(path, &encode(image, pose))
}

pub fn read(path: &Path) -> Result<(Image, Option<PoseSummary>)> {
    decode(&read_bytes(path)?)
}

/// Conventional file name of view `v`.
pub fn file_name(view: usize) -> String {
    format!("view_{view:03}.img")
}
