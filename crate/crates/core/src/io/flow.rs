//! `FLW1`: magic, u32 H, u32 W, then the dx plane and the dy plane as
//! little-endian f32.

use std::path::Path;

use super::{put_f32s, read_bytes, write_bytes, Reader};
use crate::align::FlowField;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FLW1";

pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * flow.tensor().numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(flow.height() as u32).to_le_bytes());
    out.extend_from_slice(&(flow.width() as u32).to_le_bytes());
    put_f32s(&mut out, flow.tensor().data());
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    let mut r = Reader::new(bytes, "FLW1");
    r.magic(MAGIC)?;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let plane = h
        .checked_mul(w)
        .filter(|p| p.checked_mul(8) == Some(r.remaining()))
        .ok_or_else(|| r.err("payload", format!("{} bytes for a {h}x{w} flow", r.remaining())))?;
    let start = r.pos();
    let data = r.f32s(2 * plane, "payload")?;
    r.finish()?;
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        let (name, idx) = if i < plane { ("dx", i) } else { ("dy", i - plane) };
        return Err(Error::format("FLW1", format!("{name}[{idx}]"), start + 4 * i, "non-finite value"));
    }
    FlowField::new(Tensor::new([2, h, w], data)?)
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    decode_flow(&read_bytes(path.as_ref())?)
}

pub fn write_flow(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    write_bytes(path.as_ref(), &encode_flow(flow))
}
