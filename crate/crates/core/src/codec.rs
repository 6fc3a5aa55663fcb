//! Little-endian byte encoding shared by the binary artifact formats
//! (graph dump, embedding table, subgraph store, model checkpoint).
//!
//! Every format starts with an 8-byte magic and a `u32` version. Formats that
//! carry per-record CRCs use [`crc32`] over the record payload.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CodecError;

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[derive(Debug, Default, Clone)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn header(magic: &[u8; 8], version: u32) -> Self {
        let mut w = Self::new();
        w.bytes(magic);
        w.u32(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// Length-prefixed UTF-8 string.
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    /// Checks magic and version, leaving the reader positioned after them.
    pub fn header(
        buf: &'a [u8],
        magic: &[u8; 8],
        name: &'static str,
        version: u32,
    ) -> Result<Self, CodecError> {
        let mut r = Self::new(buf);
        if r.take(8)? != magic {
            return Err(CodecError::BadMagic { expected: name });
        }
        let found = r.u32()?;
        if found != version {
            return Err(CodecError::Version {
                found,
                expected: version,
            });
        }
        Ok(r)
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: n - self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        self.array().map(u32::from_le_bytes)
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        self.array().map(u64::from_le_bytes)
    }

    pub fn i64(&mut self) -> Result<i64, CodecError> {
        self.array().map(i64::from_le_bytes)
    }

    pub fn f64(&mut self) -> Result<f64, CodecError> {
        self.array().map(f64::from_le_bytes)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CodecError> {
        // Length check up front so a corrupt count cannot trigger a huge allocation.
        self.ensure(n.saturating_mul(8))?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| CodecError::Malformed(String::from("string is not valid UTF-8")))
    }

    /// Fails with `Truncated` unless at least `n` bytes remain.
    pub fn ensure(&self, n: usize) -> Result<(), CodecError> {
        if self.remaining() < n {
            Err(CodecError::Truncated {
                offset: self.pos,
                needed: n - self.remaining(),
            })
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_checks_magic_then_version() {
        let w = ByteWriter::header(b"TESTFMT\0", 3);
        let bytes = w.into_bytes();
        assert!(ByteReader::header(&bytes, b"TESTFMT\0", "test", 3).is_ok());
        assert_eq!(
            ByteReader::header(&bytes, b"OTHERFM\0", "other", 3).unwrap_err(),
            CodecError::BadMagic { expected: "other" }
        );
        assert_eq!(
            ByteReader::header(&bytes, b"TESTFMT\0", "test", 4).unwrap_err(),
            CodecError::Version {
                found: 3,
                expected: 4
            }
        );
    }

    #[test]
    fn short_read_reports_truncation() {
        let mut r = ByteReader::new(&[1, 2, 3]);
        assert_eq!(
            r.u64().unwrap_err(),
            CodecError::Truncated {
                offset: 0,
                needed: 5
            }
        );
    }

    #[test]
    fn f64_bits_survive() {
        let vals = [0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.25];
        let mut w = ByteWriter::new();
        w.f64s(&vals);
        let bytes = w.into_bytes();
        let back = ByteReader::new(&bytes).f64s(vals.len()).unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
