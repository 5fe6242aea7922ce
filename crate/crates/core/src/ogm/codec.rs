//! The `OGMS` sequence file.
//!
//! ```text
//! "OGMS"                magic, 4 bytes
//! u16                   version (1)
//! u32 ×5                width, height, T (frames), H, P
//! f32                   resolution (m/cell)
//! f32 × T·width·height  frames, row-major, top-left origin
//! f32 × T·3             ego poses (x, y, heading)
//! u32                   CRC32 of every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::{GridSpec, Ogm, ScenarioSequence};
use crate::binio::{self, Reader, Writer};
use crate::error::DecodeError;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OGMS";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 5 * 4 + 4;

/// Size in bytes of an encoded sequence.
pub fn encoded_len(spec: GridSpec, frames: usize) -> usize {
    HEADER_LEN + frames * spec.cells() * 4 + frames * 12 + 4
}

pub fn encode_sequence(seq: &ScenarioSequence) -> Vec<u8> {
    let spec = seq.spec();
    let mut w = Writer::with_capacity(encoded_len(spec, seq.len()));
    w.bytes(&MAGIC);
    w.u16(VERSION);
    for v in [
        spec.width,
        spec.height,
        seq.len(),
        seq.history(),
        seq.horizon(),
    ] {
        w.u32(v as u32);
    }
    w.f32(spec.resolution);
    for f in seq.frames() {
        w.f32s(f.values());
    }
    for p in seq.ego_poses() {
        w.f32s(p);
    }
    w.finish()
}

pub fn decode_sequence(buf: &[u8]) -> std::result::Result<ScenarioSequence, DecodeError> {
    let mut r = Reader::new(buf);
    r.magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let t = r.u32()? as usize;
    let history = r.u32()? as usize;
    let horizon = r.u32()? as usize;
    let resolution = r.f32()?;
    let spec = GridSpec {
        width,
        height,
        resolution,
    };
    let cells = width
        .checked_mul(height)
        .ok_or_else(|| DecodeError::Malformed("grid size overflows".into()))?;
    let expected = cells
        .checked_mul(t)
        .and_then(|n| n.checked_mul(4))
        .map(|n| HEADER_LEN + n + t * 12 + 4)
        .ok_or_else(|| DecodeError::Malformed("frame payload overflows".into()))?;
    binio::check_trailer(buf, expected)?;

    let mut frames = Vec::with_capacity(t);
    for _ in 0..t {
        let values = r.f32s(cells)?;
        frames.push(Ogm::new(spec, values).map_err(|e| DecodeError::Malformed(e.to_string()))?);
    }
    let mut poses = Vec::with_capacity(t);
    for _ in 0..t {
        poses.push([r.f32()?, r.f32()?, r.f32()?]);
    }
    ScenarioSequence::new(spec, frames, poses, history, horizon)
        .map_err(|e| DecodeError::Malformed(e.to_string()))
}

pub fn write_sequence(seq: &ScenarioSequence, path: impl AsRef<Path>) -> Result<()> {
    binio::write_file(path.as_ref(), &encode_sequence(seq))
}

pub fn read_sequence(path: impl AsRef<Path>) -> Result<ScenarioSequence> {
    let path = path.as_ref();
    let buf = binio::read_file(path)?;
    decode_sequence(&buf).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ogm::{Ogm, ScenarioSequence};
    use proptest::prelude::*;

    fn sequence(w: usize, h: usize, t: usize, seed: u64) -> ScenarioSequence {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(seed, 0);
        let spec = GridSpec::new(w, h, 0.25 + rng.random::<f32>()).unwrap();
        let frames = (0..t)
            .map(|_| Ogm::new(spec, (0..w * h).map(|_| rng.random::<f32>()).collect()).unwrap())
            .collect();
        let poses = (0..t)
            .map(|_| [rng.random::<f32>() * 50.0, -rng.random::<f32>(), rng.random::<f32>()])
            .collect();
        ScenarioSequence::new(spec, frames, poses, 1, t - 1).unwrap()
    }

    #[test]
    fn layout_size_for_desk_sequence() {
        let spec = GridSpec::desk();
        assert_eq!(
            encoded_len(spec, 20),
            4 + 2 + 5 * 4 + 4 + 20 * 64 * 64 * 4 + 20 * 12 + 4
        );
        let frames = vec![Ogm::filled(spec, 0.5).unwrap(); 20];
        let seq = ScenarioSequence::new(spec, frames, vec![[0.0; 3]; 20], 5, 15).unwrap();
        assert_eq!(encode_sequence(&seq).len(), 327_954);
    }

    #[test]
    fn corrupted_checksum_is_reported() {
        let seq = sequence(8, 8, 3, 1);
        let mut buf = encode_sequence(&seq);
        let n = buf.len();
        buf[n - 1] ^= 0x5a;
        assert!(matches!(
            decode_sequence(&buf),
            Err(DecodeError::Checksum { .. })
        ));
    }

    #[test]
    fn payload_corruption_is_caught_by_checksum() {
        let seq = sequence(8, 8, 3, 2);
        let mut buf = encode_sequence(&seq);
        buf[40] ^= 0x01;
        assert!(matches!(
            decode_sequence(&buf),
            Err(DecodeError::Checksum { .. })
        ));
    }

    #[test]
    fn header_errors_are_distinct() {
        let seq = sequence(8, 8, 2, 3);
        let buf = encode_sequence(&seq);

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_sequence(&bad_magic),
            Err(DecodeError::BadMagic { .. })
        ));

        let mut bad_version = buf.clone();
        bad_version[4] = 9;
        assert!(matches!(
            decode_sequence(&bad_version),
            Err(DecodeError::UnsupportedVersion(9))
        ));

        assert!(matches!(
            decode_sequence(&buf[..buf.len() - 10]),
            Err(DecodeError::Truncated { .. })
        ));
        assert!(matches!(
            decode_sequence(&buf[..3]),
            Err(DecodeError::Truncated { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/seq.ogms");
        let seq = sequence(9, 12, 4, 4);
        write_sequence(&seq, &path).unwrap();
        assert_eq!(read_sequence(&path).unwrap(), seq);
        std::fs::write(&path, b"OGMS").unwrap();
        assert!(matches!(read_sequence(&path), Err(Error::Decode { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn decode_inverts_encode(w in 8usize..14, h in 8usize..14, t in 2usize..5, seed in any::<u64>()) {
            let seq = sequence(w, h, t, seed);
            let buf = encode_sequence(&seq);
            let back = decode_sequence(&buf).unwrap();
            prop_assert_eq!(encode_sequence(&back), buf);
            prop_assert_eq!(back, seq);
        }
    }
}
