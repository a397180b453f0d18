//! `BFCK` checkpoints: magic, u32 version, u32 header length, a JSON header
//! holding the model configuration and the tensor directory, then the
//! tensors as one contiguous little-endian f32 payload.
//!
//! The writer orders tensors by name with back-to-back offsets and the
//! reader insists on that layout, so decode followed by encode reproduces
//! the input bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{checked_numel, put_f32s, read_bytes, write_bytes, Reader};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ModelConfig};
use crate::tensor::Tensor;

pub const BFCK_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"BFCK";
const PREAMBLE: usize = 12;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    offset: usize,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut offset = 0;
    let tensors = ck
        .tensors
        .iter()
        .map(|(name, t)| {
            let e = Entry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += 4 * t.numel();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        config: ck.config.clone(),
        tensors,
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BFCK_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in ck.tensors.values() {
        put_f32s(&mut out, t.data());
    }
    out
}

/// Parses a checkpoint. Tensor shapes are checked against the stored
/// configuration later, by [`crate::model::Model::load`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes, "BFCK");
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != BFCK_VERSION {
        return Err(Error::format(
            "BFCK",
            "version",
            4,
            format!("version {version}, this reader understands {BFCK_VERSION}"),
        ));
    }
    let len = r.u32("header_len")? as usize;
    let raw = r.take(len, "header")?;
    let header: Header = serde_json::from_slice(raw).map_err(|e| {
        let at = if e.line() == 1 { e.column().saturating_sub(1) } else { 0 };
        Error::format("BFCK", "header", PREAMBLE + at, e.to_string())
    })?;
    header
        .config
        .validate()
        .map_err(|e| Error::format("BFCK", "config", PREAMBLE, e.to_string()))?;

    let base = r.pos();
    let mut expected = 0usize;
    let mut tensors = BTreeMap::new();
    let mut prev: Option<&str> = None;
    for (i, e) in header.tensors.iter().enumerate() {
        let field = |f: &str| format!("tensors[{i}].{f}");
        if prev.is_some_and(|p| p >= e.name.as_str()) {
            return Err(Error::format("BFCK", field("name"), PREAMBLE, format!("`{}` out of order or repeated", e.name)));
        }
        prev = Some(&e.name);
        if e.offset != expected {
            return Err(Error::format(
                "BFCK",
                field("offset"),
                base + expected,
                format!("`{}` at offset {}, expected {expected}", e.name, e.offset),
            ));
        }
        let numel = checked_numel(&e.shape)
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::format("BFCK", field("shape"), PREAMBLE, format!("`{}` is too large", e.name)))?;
        if e.shape.len() > super::MAX_RANK {
            return Err(Error::format("BFCK", field("shape"), PREAMBLE, format!("`{}` has rank {}", e.name, e.shape.len())));
        }
        if r.remaining() < numel * 4 {
            return Err(r.err(
                field("payload"),
                format!("`{}` needs {} bytes, {} left", e.name, numel * 4, r.remaining()),
            ));
        }
        let data = r.f32s(numel, &e.name)?;
        expected += numel * 4;
        tensors.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
    }
    r.finish()?;
    Ok(Checkpoint {
        config: header.config,
        tensors,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    write_bytes(path.as_ref(), &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&read_bytes(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn small() -> Checkpoint {
        let mut rng = SplitMix64::new(4);
        let mut tensors = BTreeMap::new();
        tensors.insert("a".to_string(), rng.tensor_uniform([2, 3], -1.0, 1.0));
        tensors.insert("b.weight".to_string(), rng.tensor_uniform([4], -1.0, 1.0));
        tensors.insert("c".to_string(), Tensor::scalar(7.0));
        Checkpoint {
            config: ModelConfig::default(),
            tensors,
        }
    }

    #[test]
    fn empty_map() {
        let ck = Checkpoint {
            config: ModelConfig::default(),
            tensors: BTreeMap::new(),
        };
        let bytes = encode_checkpoint(&ck);
        let back = decode_checkpoint(&bytes).unwrap();
        assert!(back.tensors.is_empty());
        assert_eq!(back.config, ck.config);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn three_tensors_bit_exact() {
        let ck = small();
        let bytes = encode_checkpoint(&ck);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.tensors, ck.tensors);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corrupted_offset_is_named() {
        let bytes = encode_checkpoint(&small());
        let needle = b"\"offset\":24";
        let at = bytes.windows(needle.len()).position(|w| w == needle).expect("b.weight offset");
        let mut bad = bytes.clone();
        bad[at + 10] = b'8';
        match decode_checkpoint(&bad) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "tensors[1].offset"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_skew_and_magic() {
        let mut bytes = encode_checkpoint(&small());
        bytes[4] = 2;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format { ref field, offset: 4, .. }) if field == "version"));
        bytes[0] = b'Q';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format { ref field, .. }) if field == "magic"));
    }
}
