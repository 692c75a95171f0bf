//! Versioned little-endian binary container shared by the trained models.
//!
//! Layout: magic `SROM`, format version (u32), a kind tag, then a
//! model-specific sequence of length-prefixed fields.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SROM";
pub const VERSION: u32 = 1;

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    /// Writes the header and returns the writer positioned after it.
    pub fn new(mut inner: W, kind: &str) -> Result<Self> {
        inner.write_all(MAGIC)?;
        inner.write_all(&VERSION.to_le_bytes())?;
        let mut w = Self { inner };
        w.str(kind)?;
        Ok(w)
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64s(&mut self, v: &[f64]) -> Result<()> {
        self.usize(v.len())?;
        let mut bytes = Vec::with_capacity(8 * v.len());
        for x in v {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        self.inner.write_all(&bytes)?;
        Ok(())
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.usize(s.len())?;
        self.inner.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Column-major with its shape.
    pub fn matrix(&mut self, m: &DMatrix<f64>) -> Result<()> {
        self.usize(m.nrows())?;
        self.usize(m.ncols())?;
        self.f64s(m.as_slice())
    }

    pub fn vector(&mut self, v: &DVector<f64>) -> Result<()> {
        self.f64s(v.as_slice())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

/// Upper bound on a single field, guards against corrupt length prefixes.
const MAX_FIELD: u64 = 1 << 34;

impl<R: Read> BinReader<R> {
    /// Checks the header and the kind tag.
    pub fn new(mut inner: R, expected_kind: &str) -> Result<Self> {
        let mut magic = [0u8; 4];
        inner.read_exact(&mut magic).map_err(|_| Error::Format("file too short for a header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let mut version = [0u8; 4];
        inner.read_exact(&mut version)?;
        let version = u32::from_le_bytes(version);
        if version != VERSION {
            return Err(Error::Format(format!("model format version {version}, expected {VERSION}")));
        }
        let mut r = Self { inner };
        let kind = r.str()?;
        if kind != expected_kind {
            return Err(Error::Format(format!("model kind {kind:?}, expected {expected_kind:?}")));
        }
        Ok(r)
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated model file: {e}")))?;
        Ok(b)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_FIELD {
            return Err(Error::Format(format!("implausible length {v}")));
        }
        Ok(v as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        let mut buf = vec![0u8; 8 * n];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated model file: {e}")))?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated model file: {e}")))?;
        String::from_utf8(buf).map_err(|_| Error::Format("string field is not UTF-8".into()))
    }

    pub fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let data = self.f64s()?;
        if data.len() != rows * cols {
            return Err(Error::Format(format!("matrix {rows}x{cols} holds {} values", data.len())));
        }
        Ok(DMatrix::from_vec(rows, cols, data))
    }

    pub fn vector(&mut self) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.f64s()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = DMatrix::from_fn(3, 2, |i, j| i as f64 - 0.5 * j as f64);
        let mut w = BinWriter::new(Vec::new(), "test").unwrap();
        w.matrix(&m).unwrap();
        w.str("héllo").unwrap();
        w.f64(f64::NAN).unwrap();
        let bytes = w.finish().unwrap();
        let mut r = BinReader::new(bytes.as_slice(), "test").unwrap();
        assert_eq!(r.matrix().unwrap(), m);
        assert_eq!(r.str().unwrap(), "héllo");
        assert!(r.f64().unwrap().is_nan());
        assert!(matches!(r.f64(), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_wrong_kind_version_and_magic() {
        let bytes = BinWriter::new(Vec::new(), "a").unwrap().finish().unwrap();
        assert!(matches!(BinReader::new(bytes.as_slice(), "b"), Err(Error::Format(_))));
        let mut old = bytes.clone();
        old[4] = 99;
        assert!(matches!(BinReader::new(old.as_slice(), "a"), Err(Error::Format(_))));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(BinReader::new(bad.as_slice(), "a"), Err(Error::Format(_))));
    }
}
