use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl Conv2dParams {
    /// Stride 1, "same" padding for an odd kernel of side `k`.
    pub fn same(k: usize) -> Self {
        Self {
            stride: 1,
            padding: k / 2,
            groups: 1,
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

/// 2-D cross-correlation with zero padding.
///
/// `input` is `[N, Cin, H, W]`, `weight` is `[Cout, Cin/groups, k, k]` with
/// `k` odd. Products are accumulated in `f64`.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    params: Conv2dParams,
) -> Result<Tensor> {
    let (n, cin, h, w) = input.dims4()?;
    let (cout, cin_g, kh, kw) = weight.dims4()?;
    let Conv2dParams {
        stride,
        padding,
        groups,
    } = params;
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(
            "conv2d",
            format!("kernel must be square with odd side, got {kh}x{kw}"),
        ));
    }
    if stride == 0 || groups == 0 {
        return Err(Error::invalid("conv2d", "stride and groups must be >= 1"));
    }
    if cin % groups != 0 || cout % groups != 0 {
        return Err(Error::invalid(
            "conv2d",
            format!("channels in={cin} out={cout} not divisible by groups={groups}"),
        ));
    }
    if cin_g != cin / groups {
        return Err(Error::shape(
            "conv2d",
            format!(
                "weight expects {cin_g} input channels per group, input gives {}",
                cin / groups
            ),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {:?}, expected [{cout}]", b.shape()),
            ));
        }
    }
    let k = kh;
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::shape(
            "conv2d",
            format!("{h}x{w} input with padding {padding} is smaller than kernel {k}"),
        ));
    }
    let ho = (h + 2 * padding - k) / stride + 1;
    let wo = (w + 2 * padding - k) / stride + 1;
    let cout_g = cout / groups;

    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0f32; n * cout * ho * wo];

    out.par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(plane, dst)| {
            let b = plane / cout;
            let co = plane % cout;
            let g = co / cout_g;
            let mut acc = vec![bias.map_or(0.0, |t| t.data()[co] as f64); ho * wo];
            for ci in 0..cin_g {
                let src = &x[((b * cin) + g * cin_g + ci) * h * w..][..h * w];
                let kern = &wt[(co * cin_g + ci) * k * k..][..k * k];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = kern[ky * k + kx] as f64;
                        if wv == 0.0 {
                            continue;
                        }
                        // Output columns whose input column stays inside [0, w).
                        let ox_lo = padding.saturating_sub(kx).div_ceil(stride);
                        let ox_hi = ((w + padding).saturating_sub(kx)).div_ceil(stride).min(wo);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in 0..ho {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &src[iy as usize * w..][..w];
                            let arow = &mut acc[oy * wo..][..wo];
                            if stride == 1 {
                                let ix0 = ox_lo + kx - padding;
                                let len = ox_hi - ox_lo;
                                for (a, &v) in arow[ox_lo..ox_hi].iter_mut().zip(&row[ix0..ix0 + len]) {
                                    *a += wv * v as f64;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * stride + kx - padding;
                                    arow[ox] += wv * row[ix] as f64;
                                }
                            }
                        }
                    }
                }
            }
            for (d, a) in dst.iter_mut().zip(acc) {
                *d = a as f32;
            }
        });

    Tensor::new([n, cout, ho, wo], out)?.finite_or("conv2d")
}

/// Convenience wrapper for a single `[C,H,W]` map.
pub fn conv2d_chw(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    params: Conv2dParams,
) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    let x = input.clone().reshape([1, c, h, w])?;
    let y = conv2d(&x, weight, bias, params)?;
    let (_, co, ho, wo) = y.dims4()?;
    y.reshape([co, ho, wo])
}
