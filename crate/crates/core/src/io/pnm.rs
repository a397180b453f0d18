//! Binary PGM (`P5`) and PPM (`P6`), 8- or 16-bit samples.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFile {
    pub width: usize,
    pub height: usize,
    /// 1 (`P5`) or 3 (`P6`).
    pub channels: usize,
    pub maxval: u16,
    /// Interleaved samples, row-major.
    pub samples: Vec<u16>,
}

impl ImageFile {
    fn bytes_per_sample(&self) -> usize {
        if self.maxval > 255 {
            2
        } else {
            1
        }
    }

    /// `[C,H,W]` tensor of `sample / maxval`.
    pub fn to_tensor(&self) -> Tensor {
        let (c, h, w) = (self.channels, self.height, self.width);
        let m = self.maxval as f32;
        Tensor::from_fn([c, h, w], |i| {
            let (ch, p) = (i / (h * w), i % (h * w));
            self.samples[p * c + ch] as f32 / m
        })
    }

    /// Quantizes a `[C,H,W]` (C = 1 or 3) or `[H,W]` tensor, clamping to `[0, 1]`.
    pub fn from_tensor(t: &Tensor, maxval: u16) -> Result<Self> {
        let (c, h, w) = match t.rank() {
            2 => (1, t.shape()[0], t.shape()[1]),
            3 => t.dims3()?,
            _ => return Err(Error::shape("write_image", format!("expected [C,H,W], got {:?}", t.shape()))),
        };
        if c != 1 && c != 3 {
            return Err(Error::shape("write_image", format!("{c} channels; PNM holds 1 or 3")));
        }
        if maxval == 0 {
            return Err(Error::invalid("write_image", "maxval must be >= 1"));
        }
        let d = t.data();
        let mut samples = Vec::with_capacity(c * h * w);
        for p in 0..h * w {
            for ch in 0..c {
                let v = d[ch * h * w + p];
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                samples.push((v as f64 * maxval as f64).round() as u16);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            channels: c,
            maxval,
            samples,
        })
    }
}

pub fn encode_pnm(img: &ImageFile) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.bytes_per_sample() == 1 {
        out.extend(img.samples.iter().map(|&s| s as u8));
    } else {
        for s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, field: &str, reason: impl Into<String>) -> Error {
        Error::format("PNM", field, self.pos, reason)
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        let mut v: usize = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            v = v
                .checked_mul(10)
                .and_then(|v| v.checked_add((self.bytes[self.pos] - b'0') as usize))
                .ok_or_else(|| self.err(field, "value too large"))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(if self.pos >= self.bytes.len() {
                self.err(field, "truncated header")
            } else {
                self.err(field, "expected a decimal number")
            });
        }
        Ok(v)
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageFile> {
    let mut h = Header { bytes, pos: 0 };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(h.err("magic", "expected P5 or P6")),
    };
    h.pos = 2;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(h.err("width", format!("degenerate size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(h.err("maxval", format!("{maxval} outside 1..=65535")));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        Some(_) => return Err(h.err("maxval", "expected whitespace after maxval")),
        None => return Err(h.err("payload", "truncated: no payload")),
    }
    let bps = if maxval > 255 { 2 } else { 1 };
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| h.err("width", "sample count overflows"))?;
    let payload = &bytes[h.pos..];
    if count.checked_mul(bps) != Some(payload.len()) {
        return Err(h.err(
            "payload",
            format!("{} bytes for {count} samples of {bps} byte(s)", payload.len()),
        ));
    }
    let samples: Vec<u16> = if bps == 1 {
        payload.iter().map(|&b| b as u16).collect()
    } else {
        payload.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if let Some(i) = samples.iter().position(|&s| s as usize > maxval) {
        return Err(Error::format("PNM", format!("sample[{i}]"), h.pos + i * bps, format!("exceeds maxval {maxval}")));
    }
    Ok(ImageFile {
        width,
        height,
        channels,
        maxval: maxval as u16,
        samples,
    })
}

/// Reads a PGM/PPM as a `[C,H,W]` tensor in `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(decode_pnm(&read_bytes(path.as_ref())?)?.to_tensor())
}

/// Writes `[1,H,W]`/`[H,W]` as PGM or `[3,H,W]` as PPM with `bits` 8 or 16.
pub fn write_image(path: impl AsRef<Path>, t: &Tensor, bits: u8) -> Result<()> {
    let maxval = match bits {
        8 => 255,
        16 => 65535,
        _ => return Err(Error::invalid("write_image", format!("bit depth {bits}; use 8 or 16"))),
    };
    write_bytes(path.as_ref(), &encode_pnm(&ImageFile::from_tensor(t, maxval)?))
}
