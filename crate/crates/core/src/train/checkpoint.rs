//! Checkpoint files: a length-prefixed text header followed by an `f32`
//! little-endian payload in header order.
//!
//! ```text
//! u64 LE header length
//! promptvid-checkpoint 1
//! step      <n>
//! config    <hex hash>
//! dtype     f32
//! token     <word>                  one line per tokenizer entry, in id order
//! param     <name> <d0,d1,..> <tag> one line per tensor
//! ```
//! Fields are tab separated.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::ParamGroupTag;

const MAGIC_LINE: &str = "promptvid-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub tag: ParamGroupTag,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub config_hash: String,
    pub tokens: Vec<String>,
    pub tensors: Vec<CheckpointTensor>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&CheckpointTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{MAGIC_LINE}\nstep\t{}\nconfig\t{}\ndtype\tf32\n", self.step, self.config_hash);
        for t in &self.tokens {
            header.push_str(&format!("token\t{t}\n"));
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            header.push_str(&format!("param\t{}\t{}\t{}\n", t.name, dims.join(","), t.tag));
        }
        let mut out = Vec::with_capacity(8 + header.len() + 4 * self.numel());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for t in &self.tensors {
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| corrupt("file shorter than its length prefix"))?;
        let header_len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| corrupt("header length overflow"))?;
        let header = bytes
            .get(8..8usize.saturating_add(header_len))
            .ok_or_else(|| corrupt("truncated header"))?;
        let header = std::str::from_utf8(header).map_err(|_| corrupt("header is not UTF-8"))?;
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC_LINE) {
            return Err(corrupt("not a promptvid checkpoint"));
        }
        let mut ckpt = Checkpoint {
            step: 0,
            config_hash: String::new(),
            tokens: Vec::new(),
            tensors: Vec::new(),
        };
        let mut shapes = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || corrupt(format!("header line {}: {line:?}", n + 2));
            match fields.as_slice() {
                ["step", s] => ckpt.step = s.parse().map_err(|_| bad())?,
                ["config", h] => ckpt.config_hash = h.to_string(),
                ["dtype", "f32"] => {}
                ["dtype", other] => return Err(corrupt(format!("unsupported dtype {other}"))),
                ["token", t] => ckpt.tokens.push(t.to_string()),
                ["param", name, dims, tag] => {
                    let shape = if dims.is_empty() {
                        Vec::new()
                    } else {
                        dims.split(',').map(|d| d.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad())?
                    };
                    let tag = ParamGroupTag::parse(tag).ok_or_else(bad)?;
                    shapes.push((name.to_string(), shape, tag));
                }
                _ => return Err(bad()),
            }
        }
        let mut payload = &bytes[8 + header_len..];
        let expected: usize = shapes.iter().map(|(_, s, _)| s.iter().product::<usize>() * 4).sum();
        if payload.len() != expected {
            return Err(corrupt(format!(
                "payload holds {} bytes, header declares {expected}",
                payload.len()
            )));
        }
        for (name, shape, tag) in shapes {
            let count: usize = shape.iter().product();
            let (chunk, rest) = payload.split_at(4 * count);
            payload = rest;
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
                .collect();
            ckpt.tensors.push(CheckpointTensor { name, shape, tag, values });
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of the serialised form, hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            step: 42,
            config_hash: "abc123".into(),
            tokens: vec!["<pad>".into(), "move".into()],
            tensors: vec![
                CheckpointTensor {
                    name: "a".into(),
                    shape: vec![2, 3],
                    tag: ParamGroupTag::Pretrained,
                    values: vec![0.5, -1.0, 3.25, f32::MIN_POSITIVE, 0.0, -0.0],
                },
                CheckpointTensor {
                    name: "scale".into(),
                    shape: vec![],
                    tag: ParamGroupTag::New,
                    values: vec![2.0],
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let bytes = sample().to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_and_garbage_rejected() {
        let bytes = sample().to_bytes();
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Checkpoint(_))), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut wrong = bytes;
        wrong[8] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
    }
}
