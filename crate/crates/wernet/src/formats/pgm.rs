//! 16-bit binary PGM export, scaled so the maximum maps to 65535.

use std::path::Path;

use super::write_bytes;
use crate::error::Result;

pub const MAX_GRAY: u16 = u16::MAX;

/// Gray levels of `values`. Negatives map to 0; an all-nonpositive input is
/// black.
pub fn gray_levels(values: &[f32]) -> Vec<u16> {
    let max = values.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
    values
        .iter()
        .map(|&v| {
            if max > 0.0 {
                ((v.max(0.0) as f64 / max) * MAX_GRAY as f64).round() as u16
            } else {
                0
            }
        })
        .collect()
}

/// `P5` file bytes; samples are big-endian as the format requires.
pub fn encode(rows: usize, cols: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(values.len(), rows * cols, "pgm buffer does not match its size");
    let mut out = format!("P5\n{cols} {rows}\n{MAX_GRAY}\n").into_bytes();
    for g in gray_levels(values) {
        out.extend_from_slice(&g.to_be_bytes());
    }
    out
}

pub fn write(path: &Path, rows: usize, cols: usize, values: &[f32]) -> Result<()> {
    write_bytes(path, &encode(rows, cols, values))
}

/// Parses files written by [`encode`]; returns `(rows, cols, levels)`.
pub fn decode(bytes: &[u8]) -> Option<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3].parse::<u32>().ok()? != MAX_GRAY as u32 {
        return None;
    }
    let cols: usize = fields[1].parse().ok()?;
    let rows: usize = fields[2].parse().ok()?;
    let body = bytes.get(pos..)?;
    if body.len() != 2 * rows * cols {
        return None;
    }
    let levels = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Some((rows, cols, levels))
}
