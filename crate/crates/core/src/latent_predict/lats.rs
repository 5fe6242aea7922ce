//! The `LATS` latent-sequence file.
//!
//! ```text
//! "LATS"                 magic, 4 bytes
//! u16                    version (1)
//! u16, bytes             sequence id length + UTF-8 id
//! u32 ×4                 S (style dim), C, h, w (content shape)
//! u32 ×3                 T (frames), H, P
//! f32 × T·(S + C·h·w)    per frame: style then content (row-major C, h, w)
//! u32                    CRC32 of every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::binio::{self, Reader, Writer};
use crate::error::DecodeError;
use crate::models::Latent;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"LATS";
pub const VERSION: u16 = 1;

/// Per-frame latents of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    id: String,
    style_dim: usize,
    content_shape: [usize; 3],
    history: usize,
    horizon: usize,
    latents: Vec<Latent>,
}

impl LatentSequence {
    pub fn new(
        id: impl Into<String>,
        style_dim: usize,
        content_shape: [usize; 3],
        history: usize,
        horizon: usize,
        latents: Vec<Latent>,
    ) -> Result<Self> {
        let id = id.into();
        if id.len() > u16::MAX as usize {
            return Err(Error::InvalidInput("sequence id longer than 65535 bytes".into()));
        }
        if latents.len() < history + horizon {
            return Err(Error::Shape(format!(
                "latent sequence {id} has {} frames, needs at least H + P = {}",
                latents.len(),
                history + horizon
            )));
        }
        let content_len: usize = content_shape.iter().product();
        if let Some(bad) = latents
            .iter()
            .position(|l| l.style.len() != style_dim || l.content.len() != content_len)
        {
            return Err(Error::Shape(format!(
                "latent {bad} of {id} does not have dims {style_dim} + {content_shape:?}"
            )));
        }
        Ok(LatentSequence {
            id,
            style_dim,
            content_shape,
            history,
            horizon,
            latents,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn style_dim(&self) -> usize {
        self.style_dim
    }

    pub fn content_shape(&self) -> [usize; 3] {
        self.content_shape
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn latents(&self) -> &[Latent] {
        &self.latents
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }
}

pub fn encode_latents(seq: &LatentSequence) -> Vec<u8> {
    let per_frame = seq.style_dim + seq.content_shape.iter().product::<usize>();
    let mut w = Writer::with_capacity(40 + seq.id.len() + seq.len() * per_frame * 4);
    w.bytes(&MAGIC);
    w.u16(VERSION);
    w.u16(seq.id.len() as u16);
    w.bytes(seq.id.as_bytes());
    let [c, h, wd] = seq.content_shape;
    for v in [seq.style_dim, c, h, wd, seq.len(), seq.history, seq.horizon] {
        w.u32(v as u32);
    }
    for l in &seq.latents {
        w.f32s(&l.style);
        w.f32s(&l.content);
    }
    w.finish()
}

pub fn decode_latents(buf: &[u8]) -> std::result::Result<LatentSequence, DecodeError> {
    let mut r = Reader::new(buf);
    r.magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let id_len = r.u16()? as usize;
    let id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|_| DecodeError::Malformed("sequence id is not UTF-8".into()))?
        .to_string();
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let [s, c, h, w, t, history, horizon] = dims;
    let content_len = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .ok_or_else(|| DecodeError::Malformed("content shape overflows".into()))?;
    let expected = content_len
        .checked_add(s)
        .and_then(|n| n.checked_mul(t))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(r.position() + 4))
        .ok_or_else(|| DecodeError::Malformed("latent payload overflows".into()))?;
    binio::check_trailer(buf, expected)?;
    let mut latents = Vec::with_capacity(t);
    for _ in 0..t {
        let style = r.f32s(s)?;
        let content = r.f32s(content_len)?;
        latents.push(Latent { style, content });
    }
    LatentSequence::new(id, s, [c, h, w], history, horizon, latents).map_err(|e| DecodeError::Malformed(e.to_string()))
}

pub fn write_latents(seq: &LatentSequence, path: impl AsRef<Path>) -> Result<()> {
    binio::write_file(path.as_ref(), &encode_latents(seq))
}

pub fn read_latents(path: impl AsRef<Path>) -> Result<LatentSequence> {
    let path = path.as_ref();
    let buf = binio::read_file(path)?;
    decode_latents(&buf).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn random_sequence(seed: u64, t: usize) -> LatentSequence {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(seed, 0);
        let s = rng.random_range(1..8);
        let shape = [rng.random_range(1..4), rng.random_range(1..3), rng.random_range(1..3)];
        let n: usize = shape.iter().product();
        let latents = (0..t)
            .map(|_| Latent {
                style: (0..s).map(|_| rng.random_range(-5.0..5.0)).collect(),
                content: (0..n).map(|_| f32::from_bits(rng.random())).collect(),
            })
            .collect();
        LatentSequence::new(format!("scene_{seed}"), s, shape, 1, t - 1, latents).unwrap()
    }

    fn same_bits(a: &LatentSequence, b: &LatentSequence) -> bool {
        let bits = |s: &LatentSequence| -> Vec<u32> {
            s.latents()
                .iter()
                .flat_map(|l| l.style.iter().chain(&l.content).map(|v| v.to_bits()))
                .collect()
        };
        a.id() == b.id()
            && a.content_shape() == b.content_shape()
            && (a.history(), a.horizon()) == (b.history(), b.horizon())
            && bits(a) == bits(b)
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_identical(seed in any::<u64>(), t in 2usize..12) {
            let seq = random_sequence(seed, t);
            let buf = encode_latents(&seq);
            let back = decode_latents(&buf).unwrap();
            prop_assert!(same_bits(&seq, &back));
            prop_assert_eq!(encode_latents(&back), buf);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let seq = random_sequence(3, 4);
        let buf = encode_latents(&seq);
        let mut bad = buf.clone();
        let mid = buf.len() / 2;
        bad[mid] ^= 0x01;
        assert!(matches!(decode_latents(&bad), Err(DecodeError::Checksum { .. })));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(decode_latents(&bad), Err(DecodeError::BadMagic { .. })));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(decode_latents(&bad), Err(DecodeError::UnsupportedVersion(9))));
        assert!(matches!(decode_latents(&buf[..buf.len() - 3]), Err(DecodeError::Truncated { .. })));
    }

    #[test]
    fn file_round_trip_and_length_check() {
        let dir = tempfile::tempdir().unwrap();
        let seq = random_sequence(8, 5);
        let p = dir.path().join("a.lats");
        write_latents(&seq, &p).unwrap();
        assert!(same_bits(&read_latents(&p).unwrap(), &seq));
        assert!(LatentSequence::new("x", 1, [1, 1, 1], 3, 3, vec![]).is_err());
    }
}
