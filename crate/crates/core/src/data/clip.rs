//! Video clips and the raw-frame `.vclip` container.
//!
//! Layout: the six magic bytes `VCLP1\0`, five little-endian `u32`s
//! (frames, height, width, channels, reserved = 0), then
//! `frames·height·width·channels` little-endian `f32`s in frame-major,
//! row-major, channel-last order.

use std::fs;
use std::path::Path;

use ndarray::Array4;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"VCLP1\0";
pub const CHANNELS: usize = 3;
const HEADER_LEN: usize = MAGIC.len() + 5 * 4;

/// `frames × height × width × channels`, values in `[0, 1]`.
pub type Frames = Array4<f32>;

#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    id: String,
    frames: Frames,
    labels: Vec<usize>,
}

impl VideoClip {
    /// Validates the clip invariants. `vocab_len` bounds the label indices.
    pub fn new(id: impl Into<String>, frames: Frames, labels: Vec<usize>, vocab_len: usize) -> Result<Self> {
        let id = id.into();
        validate_frames(&frames)?;
        if labels.is_empty() {
            return Err(Error::InvalidClip(format!("{id}: no labels")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= vocab_len) {
            return Err(Error::InvalidClip(format!(
                "{id}: label {bad} outside vocabulary of {vocab_len}"
            )));
        }
        let mut labels = labels;
        labels.sort_unstable();
        labels.dedup();
        Ok(Self { id, frames, labels })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frames(&self) -> &Frames {
        &self.frames
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }
}

fn validate_frames(frames: &Frames) -> Result<()> {
    let s = frames.shape();
    if s[0] == 0 || s[1] == 0 || s[2] == 0 {
        return Err(Error::InvalidClip(format!("empty frame tensor {s:?}")));
    }
    if s[3] != CHANNELS {
        return Err(Error::InvalidClip(format!("expected {CHANNELS} channels, got {}", s[3])));
    }
    if let Some(v) = frames.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidClip(format!("pixel value {v} outside [0, 1]")));
    }
    Ok(())
}

pub fn encode_frames(frames: &Frames) -> Vec<u8> {
    let s = frames.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + frames.len() * 4);
    out.extend_from_slice(MAGIC);
    for dim in [s[0], s[1], s[2], s[3], 0] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in frames.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_frames(bytes: &[u8]) -> Result<Frames> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| {
        let at = MAGIC.len() + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
    };
    let (f, h, w, c, reserved) = (word(0), word(1), word(2), word(3), word(4));
    if reserved != 0 {
        return Err(Error::DimensionMismatch(format!("reserved field is {reserved}, expected 0")));
    }
    if c != CHANNELS {
        return Err(Error::DimensionMismatch(format!("header declares {c} channels")));
    }
    if f == 0 || h == 0 || w == 0 {
        return Err(Error::DimensionMismatch(format!("header declares empty dims {f}x{h}x{w}")));
    }
    let count = f
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| Error::DimensionMismatch("header dims overflow".into()))?;
    let expected = HEADER_LEN + count * 4;
    let found = bytes.len();
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::DimensionMismatch(format!(
            "payload holds {} values, header declares {count}",
            (found - HEADER_LEN) / 4
        )));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let frames = Array4::from_shape_vec((f, h, w, c), values).expect("length checked above");
    validate_frames(&frames)?;
    Ok(frames)
}

pub fn save_frames(path: &Path, frames: &Frames) -> Result<()> {
    validate_frames(frames)?;
    fs::write(path, encode_frames(frames)).map_err(|e| Error::io(path, e))
}

pub fn load_frames(path: &Path) -> Result<Frames> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frames(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(f: usize, h: usize, w: usize) -> Frames {
        let n = (f * h * w * CHANNELS) as f32;
        Array4::from_shape_fn((f, h, w, CHANNELS), |(a, b, c, d)| {
            (((a * h + b) * w + c) * CHANNELS + d) as f32 / n
        })
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let bytes = encode_frames(&ramp(2, 1, 1));
        assert_eq!(&bytes[..6], b"VCLP1\0");
        assert_eq!(&bytes[6..26], &[2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes.len(), 26 + 6 * 4);
        assert_eq!(&bytes[26..30], &0f32.to_le_bytes());
    }

    #[test]
    fn truncated_payload_is_reported() {
        let full = encode_frames(&ramp(8, 2, 2));
        let one_frame = 2 * 2 * CHANNELS * 4;
        let err = decode_frames(&full[..full.len() - one_frame]).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { .. }), "{err}");
    }

    #[test]
    fn wrong_magic_is_reported() {
        let mut bytes = encode_frames(&ramp(1, 2, 2));
        bytes[0] = b'X';
        assert!(matches!(decode_frames(&bytes), Err(Error::BadMagic)));
        assert!(matches!(decode_frames(b"VC"), Err(Error::BadMagic)));
    }

    #[test]
    fn extra_payload_and_bad_channels_are_dimension_errors() {
        let mut bytes = encode_frames(&ramp(1, 2, 2));
        bytes.extend_from_slice(&0f32.to_le_bytes());
        assert!(matches!(decode_frames(&bytes), Err(Error::DimensionMismatch(_))));
        let mut bytes = encode_frames(&ramp(1, 2, 2));
        bytes[18] = 4;
        assert!(matches!(decode_frames(&bytes), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn out_of_range_values_rejected() {
        let mut frames = ramp(1, 2, 2);
        frames[[0, 0, 0, 0]] = 1.5;
        assert!(VideoClip::new("x", frames, vec![0], 1).is_err());
    }

    #[test]
    fn clip_invariants() {
        assert!(VideoClip::new("x", ramp(1, 2, 2), vec![], 3).is_err());
        assert!(VideoClip::new("x", ramp(1, 2, 2), vec![3], 3).is_err());
        let clip = VideoClip::new("x", ramp(1, 2, 2), vec![2, 0, 2], 3).unwrap();
        assert_eq!(clip.labels(), &[0, 2]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vclip");
        let frames = ramp(3, 4, 5);
        save_frames(&path, &frames).unwrap();
        assert_eq!(load_frames(&path).unwrap(), frames);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            f in 1usize..4, h in 1usize..5, w in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let frames = Array4::from_shape_fn((f, h, w, CHANNELS), |_| rng.random::<f32>());
            let decoded = decode_frames(&encode_frames(&frames)).unwrap();
            prop_assert!(decoded.iter().zip(frames.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
