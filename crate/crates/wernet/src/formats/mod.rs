//! Binary containers shared by the grid, image, checkpoint and dataset files.
//!
//! Every container is a 4-byte magic, a little-endian `u32` header length, a
//! UTF-8 JSON header and a little-endian payload. Decoders reject trailing
//! bytes and report the offset of the first byte they could not accept.

pub mod img;
pub mod pgm;
pub mod rds;
pub mod vxg;
pub mod wen;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{io_err, Error, Result};

/// Cursor over a container's bytes that knows its absolute offset.
pub(crate) struct Reader<'a> {
    format: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(format: &'static str, bytes: &'a [u8]) -> Self {
        Self {
            format,
            bytes,
            pos: 0,
        }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn error_at(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            format: self.format,
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> Error {
        self.error_at(self.pos, message)
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.error(format!(
                "needed {n} more bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| self.error("array length overflows"))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Checks the magic and parses the JSON header, leaving the reader at the
/// payload.
pub(crate) fn open<'a, H: DeserializeOwned>(
    format: &'static str,
    magic: &[u8; 4],
    bytes: &'a [u8],
) -> Result<(H, Reader<'a>)> {
    let mut r = Reader::new(format, bytes);
    if r.take(4)? != magic {
        return Err(r.error_at(0, format!("bad magic, expected {:?}", std::str::from_utf8(magic).unwrap())));
    }
    let len = r.u32()? as usize;
    let start = r.pos();
    let text = r.take(len)?;
    let header = serde_json::from_slice(text).map_err(|e| {
        // Headers are written on one line, so the column locates the byte.
        let col = if e.line() == 1 { e.column().saturating_sub(1) } else { 0 };
        r.error_at(start + col.min(len), format!("bad header: {e}"))
    })?;
    Ok((header, r))
}

/// Magic, header length and header, ready for the payload.
pub(crate) fn begin<H: Serialize>(magic: &[u8; 4], header: &H, payload_len: usize) -> Vec<u8> {
    let text = serde_json::to_vec(header).expect("headers serialize");
    let mut out = Vec::with_capacity(8 + text.len() + payload_len);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(&text);
    out
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, serde::Serialize, serde::Deserialize, PartialEq)]
    struct H {
        a: u32,
    }

    #[test]
    fn framing_round_trip() {
        let mut bytes = begin(b"TST1", &H { a: 7 }, 4);
        put_f32s(&mut bytes, [1.5]);
        let (h, mut r): (H, _) = open("test", b"TST1", &bytes).unwrap();
        assert_eq!(h, H { a: 7 });
        assert_eq!(r.f32s(1).unwrap(), vec![1.5]);
        r.finish().unwrap();
    }

    #[test]
    fn errors_carry_offsets() {
        let bytes = begin(b"TST1", &H { a: 7 }, 0);
        let Err(Error::Format { offset, .. }) = open::<H>("test", b"XXX1", &bytes) else {
            panic!("magic accepted");
        };
        assert_eq!(offset, 0);
        let (_, mut r) = open::<H>("test", b"TST1", &bytes).unwrap();
        let Err(Error::Format { offset, .. }) = r.f32s(1) else {
            panic!("short payload accepted");
        };
        assert_eq!(offset, bytes.len());
        let Err(Error::Format { offset, .. }) = open::<H>("test", b"TST1", &bytes[..6]) else {
            panic!("short length accepted");
        };
        assert_eq!(offset, 4);
        let mut extra = bytes.clone();
        extra.push(0);
        let (_, r) = open::<H>("test", b"TST1", &extra).unwrap();
        assert!(matches!(r.finish(), Err(Error::Format { offset, .. }) if offset == bytes.len()));
    }

    #[test]
    fn bad_header_points_into_it() {
        let text = br#"{"a":"x"}"#;
        let mut bytes = b"TST1".to_vec();
        bytes.extend_from_slice(&(text.len() as u32).to_le_bytes());
        bytes.extend_from_slice(text);
        let Err(Error::Format { offset, .. }) = open::<H>("test", b"TST1", &bytes) else {
            panic!("bad header accepted");
        };
        assert!((8..bytes.len()).contains(&offset));
    }
}
