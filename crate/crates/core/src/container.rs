//! Little-endian binary container shared by corpus and checkpoint files.
//!
//! Layout:
//! - magic: 4 bytes
//! - version: u32
//! - header: u32 length + UTF-8 bytes
//! - tensors until end of file, each: u32 name length, name bytes,
//!   u32 rank, rank × u32 dims, payload (`f32` or `f64` per element)
//!
//! Readers decode from an in-memory buffer and only hand back a value once
//! the whole file has parsed.

use std::io::Write;

use crate::error::{FormatError, Result};
use crate::numerics::Tensor;

/// Upper bound on any single length prefix, to reject garbage early.
const MAX_PREFIX: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

pub struct Writer<W: Write> {
    inner: W,
    written: u64,
}

impl<W: Write> Writer<W> {
    pub fn new(inner: W, magic: [u8; 4], version: u32, header: &[u8]) -> Result<Self> {
        let mut w = Self { inner, written: 0 };
        w.raw(&magic)?;
        w.u32(version)?;
        w.u32(header.len() as u32)?;
        w.raw(header)?;
        Ok(w)
    }

    fn raw(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes)?;
        self.written += bytes.len() as u64;
        Ok(())
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        self.raw(&v.to_le_bytes())
    }

    /// Bytes written so far, header included.
    pub fn position(&self) -> u64 {
        self.written
    }

    pub fn tensor(&mut self, name: &str, t: &Tensor, precision: Precision) -> Result<()> {
        self.u32(name.len() as u32)?;
        self.raw(name.as_bytes())?;
        self.u32(t.shape().len() as u32)?;
        for &d in t.shape() {
            self.u32(d as u32)?;
        }
        let mut buf = Vec::with_capacity(t.len() * precision.width());
        match precision {
            Precision::F32 => t.data().iter().for_each(|v| buf.extend((*v as f32).to_le_bytes())),
            Precision::F64 => t.data().iter().for_each(|v| buf.extend(v.to_le_bytes())),
        }
        self.raw(&buf)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Byte length of one encoded tensor record.
pub fn record_len(name: &str, t: &Tensor, precision: Precision) -> u64 {
    (4 + name.len() + 4 + 4 * t.shape().len() + t.len() * precision.width()) as u64
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    body_start: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and returns the header bytes.
    pub fn open(buf: &'a [u8], magic: [u8; 4], supported: u32) -> Result<(Self, u32, &'a [u8])> {
        let mut r = Self {
            buf,
            pos: 0,
            body_start: 0,
        };
        let found: [u8; 4] = r.take(4, "magic bytes")?.try_into().expect("four bytes");
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: magic,
                found,
            }
            .into());
        }
        let version = r.u32("format version")?;
        if version != supported {
            return Err(FormatError::UnsupportedVersion {
                found: version,
                supported,
            }
            .into());
        }
        let len = r.prefix("header length")?;
        let header = r.take(len, "header")?;
        r.body_start = r.pos;
        Ok((r, version, header))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated(what.to_string()).into());
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("four bytes")))
    }

    fn prefix(&mut self, what: &str) -> Result<usize> {
        let v = self.u32(what)?;
        if v > MAX_PREFIX {
            return Err(FormatError::Malformed(format!("{what} {v} is implausibly large")).into());
        }
        Ok(v as usize)
    }

    /// Offset of the next record, relative to the first byte after the header.
    pub fn body_offset(&self) -> u64 {
        (self.pos - self.body_start) as u64
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn tensor(&mut self, precision: Precision) -> Result<(String, Tensor)> {
        let len = self.prefix("tensor name length")?;
        let name = std::str::from_utf8(self.take(len, "tensor name")?)
            .map_err(|_| FormatError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = self.prefix("tensor rank")?;
        if rank > 8 {
            return Err(FormatError::Malformed(format!("tensor {name} has rank {rank}")).into());
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.prefix("tensor dims")?);
        }
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| {
            FormatError::Malformed(format!("tensor {name} shape {shape:?} overflows"))
        })?;
        let bytes = count
            .checked_mul(precision.width())
            .ok_or_else(|| FormatError::Malformed(format!("tensor {name} is too large")))?;
        let payload = self.take(bytes, &format!("payload of {name}"))?;
        let data: Vec<f64> = match precision {
            Precision::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64)
                .collect(),
            Precision::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
                .collect(),
        };
        let t = Tensor::new(shape, data).map_err(|e| FormatError::Malformed(e.to_string()))?;
        Ok((name, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    const MAGIC: [u8; 4] = *b"TEST";

    fn encode() -> Vec<u8> {
        let mut w = Writer::new(Vec::new(), MAGIC, 3, b"hello").unwrap();
        w.tensor("a", &Tensor::from_rows(2, 2, vec![1.0, -2.5, 0.1, 3.0]), Precision::F64)
            .unwrap();
        w.tensor("b", &Tensor::row_vector(vec![0.5, 0.25]), Precision::F32).unwrap();
        w.finish().unwrap()
    }

    #[test]
    fn roundtrip() {
        let buf = encode();
        let (mut r, v, h) = Reader::open(&buf, MAGIC, 3).unwrap();
        assert_eq!((v, h), (3, &b"hello"[..]));
        let (n, a) = r.tensor(Precision::F64).unwrap();
        assert_eq!(n, "a");
        assert_eq!(a.data(), &[1.0, -2.5, 0.1, 3.0]);
        assert_eq!(r.body_offset(), record_len("a", &a, Precision::F64));
        let (_, b) = r.tensor(Precision::F32).unwrap();
        assert_eq!(b.data(), &[0.5, 0.25]);
        assert!(r.at_end());
    }

    #[test]
    fn typed_failures() {
        let mut buf = encode();
        assert!(matches!(
            Reader::open(&buf, *b"NOPE", 3).err().unwrap(),
            Error::Format(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            Reader::open(&buf, MAGIC, 4).err().unwrap(),
            Error::Format(FormatError::UnsupportedVersion { found: 3, .. })
        ));
        buf.truncate(buf.len() - 3);
        let (mut r, ..) = Reader::open(&buf, MAGIC, 3).unwrap();
        r.tensor(Precision::F64).unwrap();
        assert!(matches!(
            r.tensor(Precision::F32).unwrap_err(),
            Error::Format(FormatError::Truncated(_))
        ));
        assert!(matches!(
            Reader::open(&buf[..6], MAGIC, 3).err().unwrap(),
            Error::Format(FormatError::Truncated(_))
        ));
    }
}
