//! Spatial rearrangement and resampling of `[N,C,H,W]` maps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean over each `k x k` window, no padding.
///
/// When `k == stride` (pyramid mode) the spatial dims must be divisible by
/// `k`; otherwise trailing rows/columns that do not fill a window are dropped.
pub fn avg_pool2d(input: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    if k == 0 || stride == 0 {
        return Err(Error::invalid("avg_pool2d", "k and stride must be >= 1"));
    }
    if k == stride && (h % k != 0 || w % k != 0) {
        return Err(Error::shape(
            "avg_pool2d",
            format!("{h}x{w} is not divisible by pool size {k}"),
        ));
    }
    if h < k || w < k {
        return Err(Error::shape(
            "avg_pool2d",
            format!("{h}x{w} is smaller than pool size {k}"),
        ));
    }
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let x = input.data();
    let norm = 1.0 / (k * k) as f64;
    let mut out = vec![0.0f32; n * c * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(p, dst)| {
        let src = &x[p * h * w..][..h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0f64;
                for ky in 0..k {
                    let row = &src[(oy * stride + ky) * w + ox * stride..][..k];
                    acc += row.iter().map(|&v| v as f64).sum::<f64>();
                }
                dst[oy * wo + ox] = (acc * norm) as f32;
            }
        }
    });
    Tensor::new([n, c, ho, wo], out)
}

/// Sub-pixel rearrangement `[N, C*u*u, H, W]` → `[N, C, u*H, u*W]`:
/// output `(c, y*u+i, x*u+j)` takes input channel `c*u*u + i*u + j` at `(y, x)`.
pub fn pixel_shuffle(input: &Tensor, u: usize) -> Result<Tensor> {
    let (n, cu, h, w) = input.dims4()?;
    if u == 0 || cu % (u * u) != 0 {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("{cu} channels not divisible by {u}^2"),
        ));
    }
    let c = cu / (u * u);
    let (oh, ow) = (h * u, w * u);
    let x = input.data();
    let mut out = vec![0.0f32; input.numel()];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..u {
                for j in 0..u {
                    let src = &x[((b * cu) + ch * u * u + i * u + j) * h * w..][..h * w];
                    let dst_base = (b * c + ch) * oh * ow;
                    for y in 0..h {
                        let drow = dst_base + (y * u + i) * ow;
                        for xx in 0..w {
                            out[drow + xx * u + j] = src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Tensor::new([n, c, oh, ow], out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &Tensor, u: usize) -> Result<Tensor> {
    let (n, c, oh, ow) = input.dims4()?;
    if u == 0 || oh % u != 0 || ow % u != 0 {
        return Err(Error::shape(
            "pixel_unshuffle",
            format!("{oh}x{ow} not divisible by {u}"),
        ));
    }
    let (h, w) = (oh / u, ow / u);
    let cu = c * u * u;
    let x = input.data();
    let mut out = vec![0.0f32; input.numel()];
    for b in 0..n {
        for ch in 0..c {
            let src_base = (b * c + ch) * oh * ow;
            for i in 0..u {
                for j in 0..u {
                    let dst = &mut out[((b * cu) + ch * u * u + i * u + j) * h * w..][..h * w];
                    for y in 0..h {
                        for xx in 0..w {
                            dst[y * w + xx] = x[src_base + (y * u + i) * ow + xx * u + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::new([n, cu, h, w], out)
}

/// Bilinear lookup into one `h x w` plane with clamp-to-edge addressing.
#[inline]
pub(crate) fn sample_clamped(plane: &[f32], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let a = plane[y0 * w + x0] as f64;
    let b = plane[y0 * w + x1] as f64;
    let c = plane[y1 * w + x0] as f64;
    let d = plane[y1 * w + x1] as f64;
    (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)
}

/// Bilinear lookup where taps outside the plane read as zero.
#[inline]
pub(crate) fn sample_zero_pad(plane: &[f32], h: usize, w: usize, x: f64, y: f64) -> f64 {
    if !(x > -1.0 && y > -1.0 && x < w as f64 && y < h as f64) {
        return 0.0;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let tap = |yy: isize, xx: isize| -> f64 {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            plane[yy as usize * w + xx as usize] as f64
        }
    };
    let mut acc = 0.0;
    if fy < 1.0 {
        if fx < 1.0 {
            acc += (1.0 - fy) * (1.0 - fx) * tap(y0, x0);
        }
        if fx > 0.0 {
            acc += (1.0 - fy) * fx * tap(y0, x0 + 1);
        }
    }
    if fy > 0.0 {
        if fx < 1.0 {
            acc += fy * (1.0 - fx) * tap(y0 + 1, x0);
        }
        if fx > 0.0 {
            acc += fy * fx * tap(y0 + 1, x0 + 1);
        }
    }
    acc
}

/// Samples `input` at absolute pixel coordinates.
///
/// `coords` is `[N, 2, H', W']` with channel 0 holding `x` (column) and
/// channel 1 holding `y` (row). Coordinates outside the image clamp to the
/// nearest edge.
pub fn bilinear_sample(input: &Tensor, coords: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let (nc, two, ho, wo) = coords.dims4()?;
    if nc != n || two != 2 {
        return Err(Error::shape(
            "bilinear_sample",
            format!("coords {:?} do not match input {:?}", coords.shape(), input.shape()),
        ));
    }
    if h == 0 || w == 0 {
        return Err(Error::shape("bilinear_sample", "empty input plane"));
    }
    let x = input.data();
    let g = coords.data();
    let mut out = vec![0.0f32; n * c * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(p, dst)| {
        let b = p / c;
        let plane = &x[p * h * w..][..h * w];
        let gx = &g[(b * 2) * ho * wo..][..ho * wo];
        let gy = &g[(b * 2 + 1) * ho * wo..][..ho * wo];
        for i in 0..ho * wo {
            dst[i] = sample_clamped(plane, h, w, gx[i] as f64, gy[i] as f64) as f32;
        }
    });
    Tensor::new([n, c, ho, wo], out)?.finite_or("bilinear_sample")
}

/// Bilinear resize by an integer factor using pixel-center alignment
/// (`src = (dst + 0.5) / factor - 0.5`), clamp-to-edge.
pub fn upsample_bilinear(input: &Tensor, factor: usize) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    if factor == 0 {
        return Err(Error::invalid("upsample_bilinear", "factor must be >= 1"));
    }
    let (ho, wo) = (h * factor, w * factor);
    let x = input.data();
    let f = factor as f64;
    let mut out = vec![0.0f32; n * c * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(p, dst)| {
        let plane = &x[p * h * w..][..h * w];
        for oy in 0..ho {
            let sy = (oy as f64 + 0.5) / f - 0.5;
            for ox in 0..wo {
                let sx = (ox as f64 + 0.5) / f - 0.5;
                dst[oy * wo + ox] = sample_clamped(plane, h, w, sx, sy) as f32;
            }
        }
    });
    Tensor::new([n, c, ho, wo], out)
}

pub fn pad_zero(
    input: &Tensor,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let (ho, wo) = (h + top + bottom, w + left + right);
    let x = input.data();
    let mut out = vec![0.0f32; n * c * ho * wo];
    for p in 0..n * c {
        for y in 0..h {
            let src = &x[(p * h + y) * w..][..w];
            out[(p * ho + y + top) * wo + left..][..w].copy_from_slice(src);
        }
    }
    Tensor::new([n, c, ho, wo], out)
}

/// Removes a border; the inverse of [`pad_zero`].
pub fn crop(
    input: &Tensor,
    top: usize,
    left: usize,
    height: usize,
    width: usize,
) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    if top + height > h || left + width > w {
        return Err(Error::shape(
            "crop",
            format!("{height}x{width} at ({top},{left}) exceeds {h}x{w}"),
        ));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * height * width);
    for p in 0..n * c {
        for y in top..top + height {
            out.extend_from_slice(&x[(p * h + y) * w + left..][..width]);
        }
    }
    Tensor::new([n, c, height, width], out)
}
