//! In-memory dataset and the `TPAE` binary embedding file.
//!
//! Layout (little-endian): magic `TPAE`, `u32` version, `u32` dim, `u32`
//! classes, `u64` record count, then per record `u32` id length, UTF-8 id,
//! `u32` label, `u32` frame count `T`, and `T * dim` `f32` values.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"TPAE";
pub const DATASET_VERSION: u32 = 1;

/// One video: identifier, class label and a `T x D` frame-embedding matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub label: usize,
    dim: usize,
    frames: Vec<f32>,
}

impl VideoRecord {
    pub fn new(id: impl Into<String>, label: usize, dim: usize, frames: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if dim == 0 {
            return Err(Error::Validation("embedding dim must be positive".into()));
        }
        if frames.is_empty() || !frames.len().is_multiple_of(dim) {
            return Err(Error::Validation(format!(
                "record {id}: {} values is not a positive multiple of dim {dim}",
                frames.len()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("record {id}: non-finite frame value")));
        }
        Ok(Self {
            id,
            label,
            dim,
            frames,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / self.dim
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> &[f32] {
        &self.frames
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_classes: usize,
    records: Vec<VideoRecord>,
}

impl Dataset {
    pub fn new(dim: usize, num_classes: usize, records: Vec<VideoRecord>) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::Validation("dim and class count must be positive".into()));
        }
        for r in &records {
            if r.label >= num_classes {
                return Err(Error::Validation(format!(
                    "record {}: label {} >= class count {num_classes}",
                    r.id, r.label
                )));
            }
            if r.dim != dim {
                return Err(Error::Validation(format!(
                    "record {}: frame width {} != dataset dim {dim}",
                    r.id, r.dim
                )));
            }
        }
        Ok(Self {
            dim,
            num_classes,
            records,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.id.len() as u32).to_le_bytes());
            out.extend_from_slice(r.id.as_bytes());
            out.extend_from_slice(&(r.label as u32).to_le_bytes());
            out.extend_from_slice(&(r.num_frames() as u32).to_le_bytes());
            for v in &r.frames {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != DATASET_MAGIC {
            return Err(Error::Format("bad magic, expected TPAE".into()));
        }
        let version = rd.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {version}, expected {DATASET_VERSION}"
            )));
        }
        let dim = rd.u32()? as usize;
        let num_classes = rd.u32()? as usize;
        let count = rd.u64()?;
        let mut records = Vec::new();
        for i in 0..count {
            let id_len = rd.u32()? as usize;
            let id = std::str::from_utf8(rd.take(id_len)?)
                .map_err(|_| Error::Format(format!("record {i}: id is not UTF-8")))?
                .to_owned();
            let label = rd.u32()? as usize;
            let frames = rd.u32()? as usize;
            if frames == 0 {
                return Err(Error::Validation(format!("record {id}: zero frames")));
            }
            let raw = rd.take(frames * dim * 4)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            records.push(VideoRecord::new(id, label, dim, values)?);
        }
        if rd.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after last record",
                bytes.len() - rd.pos
            )));
        }
        Self::new(dim, num_classes, records)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Little-endian cursor that reports truncation as a format error.
pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let a = VideoRecord::new("a", 0, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = VideoRecord::new("béta", 1, 2, vec![-0.5, f32::MIN_POSITIVE]).unwrap();
        Dataset::new(2, 2, vec![a, b]).unwrap()
    }

    #[test]
    fn round_trip_bytes() {
        let ds = tiny();
        assert_eq!(Dataset::from_bytes(&ds.to_bytes()).unwrap(), ds);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = tiny().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let mut bytes = tiny().to_bytes();
        bytes[4] = 2;
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_format_error() {
        let bytes = tiny().to_bytes();
        for cut in [3, 10, 25, bytes.len() - 1] {
            assert!(matches!(Dataset::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn zero_frames_is_validation_error() {
        let mut bytes = tiny().to_bytes();
        // first record: header 24 bytes, id len 4, id "a" 1, label 4, T at 33
        bytes[33..37].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Validation(_))));
        assert!(VideoRecord::new("x", 0, 3, vec![]).is_err());
    }

    #[test]
    fn label_out_of_range_rejected() {
        let mut bytes = tiny().to_bytes();
        bytes[29..33].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Validation(_))));
    }
}
