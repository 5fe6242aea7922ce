//! Checkpoint container shared by both training stages.
//!
//! ```text
//! "OGMC"                   magic
//! u16                      version (1)
//! u32, bytes               length + UTF-8 JSON metadata (kind, configs, hashes)
//! u32                      tensor count
//! per tensor:
//!   u16, bytes             name length + UTF-8 name
//!   u8, u32 × ndim         rank and dimensions
//!   f32 × prod(dims)       values, little-endian, row-major
//! u32                      CRC32 of every preceding byte
//! ```
//!
//! Readers ignore unknown metadata keys, so metadata can grow without a
//! version bump.

use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::binio::{self, Reader, Writer};
use crate::error::DecodeError;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OGMC";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new<M: Serialize>(meta: &M, tensors: Vec<NamedTensor>) -> Result<Self> {
        Ok(Checkpoint {
            meta: serde_json::to_value(meta)?,
            tensors,
        })
    }

    pub fn meta<M: DeserializeOwned>(&self) -> Result<M> {
        Ok(serde_json::from_value(self.meta.clone())?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&MAGIC);
        w.u16(VERSION);
        let json = serde_json::to_vec(&self.meta).expect("JSON values serialize");
        w.u32(json.len() as u32);
        w.bytes(&json);
        w.u32(self.tensors.len() as u32);
        for t in &self.tensors {
            w.u16(t.name.len() as u16);
            w.bytes(t.name.as_bytes());
            w.u8(t.dims.len() as u8);
            for d in &t.dims {
                w.u32(*d as u32);
            }
            w.f32s(&t.values);
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> std::result::Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        r.magic(MAGIC)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(DecodeError::UnsupportedVersion(version));
        }
        if buf.len() < 4 {
            return Err(DecodeError::Truncated {
                expected: 4,
                found: buf.len(),
            });
        }
        // The tensor table has to be walked to find its end, so verify the
        // trailer against the full length first.
        let stored = u32::from_le_bytes(buf[buf.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(&buf[..buf.len() - 4]);
        if stored != computed {
            return Err(DecodeError::Checksum { stored, computed });
        }
        let body = &buf[..buf.len() - 4];
        let mut r2 = Reader::new(body);
        r2.take(r.position())?;
        let json_len = r2.u32()? as usize;
        let meta: serde_json::Value = serde_json::from_slice(r2.take(json_len)?)
            .map_err(|e| DecodeError::Malformed(format!("metadata: {e}")))?;
        let n = r2.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let len = r2.u16()? as usize;
            let name = String::from_utf8(r2.take(len)?.to_vec())
                .map_err(|_| DecodeError::Malformed("tensor name is not UTF-8".into()))?;
            let ndim = r2.u8()? as usize;
            let dims = (0..ndim).map(|_| r2.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
                DecodeError::Malformed(format!("tensor {name} is too large"))
            })?;
            let values = r2.f32s(count)?;
            tensors.push(NamedTensor { name, dims, values });
        }
        if r2.position() != body.len() {
            return Err(DecodeError::Malformed(format!(
                "{} unread bytes after tensor table",
                body.len() - r2.position()
            )));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        binio::write_file(path.as_ref(), &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = binio::read_file(path)?;
        Checkpoint::decode(&buf).map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn kind(&self) -> Option<&str> {
        self.meta.get("kind").and_then(|k| k.as_str())
    }
}
