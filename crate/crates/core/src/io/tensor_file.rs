//! `BFT1`: magic, u32 rank, rank x u32 dims, little-endian f32 payload.

use std::path::Path;

use super::{checked_numel, put_f32s, read_bytes, write_bytes, Reader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAX_RANK: usize = 8;
const MAGIC: &[u8; 4] = b"BFT1";

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    put_f32s(&mut out, t.data());
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes, "BFT1");
    r.magic(MAGIC)?;
    let rank = r.u32("rank")? as usize;
    if rank > MAX_RANK {
        return Err(r.err("rank", format!("{rank} exceeds the maximum of {MAX_RANK}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(r.u32(&format!("dims[{i}]"))? as usize);
    }
    let numel = checked_numel(&dims).ok_or_else(|| r.err("dims", "element count overflows"))?;
    if numel.checked_mul(4) != Some(r.remaining()) {
        return Err(r.err(
            "payload",
            format!("{} bytes for {numel} elements of shape {dims:?}", r.remaining()),
        ));
    }
    let data = r.f32s(numel, "payload")?;
    r.finish()?;
    Tensor::new(dims, data).map_err(|e| Error::format("BFT1", "dims", 8, e.to_string()))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&read_bytes(path.as_ref())?)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_bytes(path.as_ref(), &encode_tensor(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn round_trip_bit_exact() {
        let mut t = SplitMix64::new(1).tensor_uniform([2, 3, 4], -1.0, 1.0);
        t.data_mut()[5] = f32::from_bits(0x7fc0_1234);
        let bytes = encode_tensor(&t);
        let back = decode_tensor(&bytes).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(encode_tensor(&back), bytes);
    }

    #[test]
    fn scalar_and_empty() {
        let s = decode_tensor(&encode_tensor(&Tensor::scalar(2.5))).unwrap();
        assert_eq!(s.shape(), &[] as &[usize]);
        assert_eq!(s.data(), &[2.5]);
        let e = decode_tensor(&encode_tensor(&Tensor::zeros([0, 3]))).unwrap();
        assert_eq!(e.shape(), &[0, 3]);
    }

    #[test]
    fn rejections_are_positioned() {
        let bytes = encode_tensor(&Tensor::zeros([2, 2]));
        match decode_tensor(&bytes[..bytes.len() - 1]) {
            Err(Error::Format { field, offset, .. }) => {
                assert_eq!(field, "payload");
                assert_eq!(offset, 16);
            }
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensor(&bad), Err(Error::Format { ref field, .. }) if field == "magic"));
        let mut huge = bytes;
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_tensor(&huge), Err(Error::Format { .. })));
    }
}
