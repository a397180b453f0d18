//! Brute-force reference implementations.
//!
//! Every function here is a direct nested-loop transcription of the
//! definition of a kernel, evaluated in `f64` on raw index arithmetic. None of
//! them calls into [`crate::ops`], [`crate::attention`], [`crate::ssm`] or
//! [`crate::align`]; they exist to be compared against those modules by the
//! unit tests, the acceptance suite and `burstforge selftest`.

use crate::attention::RelPosBias;
use crate::ssm::SsmParams;
use crate::tensor::Tensor;

fn t(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data.into_iter().map(|v| v as f32).collect()).expect("oracle shape")
}

fn d4(x: &Tensor) -> (usize, usize, usize, usize) {
    x.dims4().expect("oracle expects rank 4")
}

pub fn conv2d(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> Tensor {
    let (n, cin, h, wd) = d4(x);
    let (cout, cg, k, _) = d4(w);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let og = cout / groups;
    let mut out = vec![0.0; n * cout * ho * wo];
    for bi in 0..n {
        for co in 0..cout {
            let g = co / og;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = b.map_or(0.0, |b| b.data()[co] as f64);
                    for ci in 0..cg {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((bi * cin + g * cg + ci) * h + iy as usize) * wd + ix as usize];
                                let wv = w.data()[((co * cg + ci) * k + ky) * k + kx];
                                s += xv as f64 * wv as f64;
                            }
                        }
                    }
                    out[((bi * cout + co) * ho + oy) * wo + ox] = s;
                }
            }
        }
    }
    t([n, cout, ho, wo], out)
}

pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Tensor {
    let (dout, din) = w.dims2().expect("oracle weight");
    let rows = x.numel() / din;
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        for o in 0..dout {
            let mut s = b.map_or(0.0, |b| b.data()[o] as f64);
            for i in 0..din {
                s += x.data()[r * din + i] as f64 * w.data()[o * din + i] as f64;
            }
            out[r * dout + o] = s;
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = dout;
    t(shape, out)
}

pub fn layer_norm(x: &Tensor, g: &Tensor, b: &Tensor, eps: f64) -> Tensor {
    let d = *x.shape().last().unwrap();
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks(d) {
        let mean: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var: f64 = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        for (i, &v) in row.iter().enumerate() {
            out.push((v as f64 - mean) / (var + eps).sqrt() * g.data()[i] as f64 + b.data()[i] as f64);
        }
    }
    t(x.shape().to_vec(), out)
}

pub fn softmax_lastdim(x: &Tensor) -> Tensor {
    let d = *x.shape().last().unwrap();
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks(d) {
        let exps: Vec<f64> = row.iter().map(|&v| (v as f64).exp()).collect();
        let s: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / s));
    }
    t(x.shape().to_vec(), out)
}

pub fn avg_pool2d(x: &Tensor, k: usize, stride: usize) -> Tensor {
    let (n, c, h, w) = d4(x);
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let mut out = vec![0.0; n * c * ho * wo];
    for p in 0..n * c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = 0.0;
                for ky in 0..k {
                    for kx in 0..k {
                        s += x.data()[(p * h + oy * stride + ky) * w + ox * stride + kx] as f64;
                    }
                }
                out[(p * ho + oy) * wo + ox] = s / (k * k) as f64;
            }
        }
    }
    t([n, c, ho, wo], out)
}

/// Pixel shuffle by explicit destination-to-source index mapping.
pub fn pixel_shuffle(x: &Tensor, u: usize) -> Tensor {
    let (n, cu, h, w) = d4(x);
    let c = cu / (u * u);
    let mut out = Vec::with_capacity(x.numel());
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..h * u {
                for ox in 0..w * u {
                    let src_c = ch * u * u + (oy % u) * u + (ox % u);
                    out.push(x.data()[((b * cu + src_c) * h + oy / u) * w + ox / u]);
                }
            }
        }
    }
    Tensor::new([n, c, h * u, w * u], out).unwrap()
}

/// Four-tap weighted bilinear sample with clamp-to-edge, as an explicit sum.
pub fn bilinear_at(plane: &[f32], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x = x.max(0.0).min((w - 1) as f64);
    let y = y.max(0.0).min((h - 1) as f64);
    let (x0, y0) = (x.floor(), y.floor());
    let mut s = 0.0;
    for (dy, wy) in [(0.0, 1.0 - (y - y0)), (1.0, y - y0)] {
        for (dx, wx) in [(0.0, 1.0 - (x - x0)), (1.0, x - x0)] {
            let yy = ((y0 + dy) as usize).min(h - 1);
            let xx = ((x0 + dx) as usize).min(w - 1);
            s += wy * wx * plane[yy * w + xx] as f64;
        }
    }
    s
}

/// Four-tap bilinear sample where out-of-range taps read zero.
pub fn bilinear_zero_at(plane: &[f32], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let mut s = 0.0;
    for (dy, wy) in [(0.0, 1.0 - (y - y0)), (1.0, y - y0)] {
        for (dx, wx) in [(0.0, 1.0 - (x - x0)), (1.0, x - x0)] {
            let yy = y0 + dy;
            let xx = x0 + dx;
            if yy >= 0.0 && xx >= 0.0 && yy < h as f64 && xx < w as f64 {
                s += wy * wx * plane[yy as usize * w + xx as usize] as f64;
            }
        }
    }
    s
}

pub fn bilinear_sample(x: &Tensor, coords: &Tensor) -> Tensor {
    let (n, c, h, w) = d4(x);
    let (_, _, ho, wo) = d4(coords);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for b in 0..n {
        for ch in 0..c {
            let plane = &x.data()[(b * c + ch) * h * w..][..h * w];
            for i in 0..ho * wo {
                let gx = coords.data()[(b * 2) * ho * wo + i] as f64;
                let gy = coords.data()[(b * 2 + 1) * ho * wo + i] as f64;
                out.push(bilinear_at(plane, h, w, gx, gy));
            }
        }
    }
    t([n, c, ho, wo], out)
}

/// Tokens of every (possibly enlarged) window, by index mapping.
///
/// Window `(wy, wx)` of side `side` starts at `(wy*stride - margin, wx*stride - margin)`;
/// positions outside the map read zero. Output `[B*nW, side*side, C]`.
pub fn window_tokens(f: &Tensor, stride: usize, side: usize, margin: usize) -> Tensor {
    let (b, c, h, w) = d4(f);
    let (nh, nw) = (h / stride, w / stride);
    let mut out = Vec::new();
    for bi in 0..b {
        for wy in 0..nh {
            for wx in 0..nw {
                for i in 0..side {
                    for j in 0..side {
                        let y = (wy * stride + i) as isize - margin as isize;
                        let x = (wx * stride + j) as isize - margin as isize;
                        for ch in 0..c {
                            let v = if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                0.0
                            } else {
                                f.data()[((bi * c + ch) * h + y as usize) * w + x as usize]
                            };
                            out.push(v);
                        }
                    }
                }
            }
        }
    }
    Tensor::new([b * nh * nw, side * side, c], out).unwrap()
}

/// Multi-head attention per window with an additive relative-position bias,
/// evaluated entirely in `f64`.
pub fn window_attention(q: &Tensor, k: &Tensor, v: &Tensor, bias: &RelPosBias, heads: usize) -> Tensor {
    let (tw, nq, c) = q.dims3().unwrap();
    let (_, nk, _) = k.dims3().unwrap();
    let d = c / heads;
    let mut out = vec![0.0; tw * nq * c];
    for wi in 0..tw {
        for hd in 0..heads {
            for qi in 0..nq {
                let mut logits = vec![0.0; nk];
                for (ki, l) in logits.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for e in 0..d {
                        s += q.data()[(wi * nq + qi) * c + hd * d + e] as f64
                            * k.data()[(wi * nk + ki) * c + hd * d + e] as f64;
                    }
                    *l = s / (d as f64).sqrt() + bias.value(hd, qi, ki) as f64;
                }
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
                for e in 0..d {
                    let mut s = 0.0;
                    for ki in 0..nk {
                        s += (logits[ki] - m).exp() / z * v.data()[(wi * nk + ki) * c + hd * d + e] as f64;
                    }
                    out[(wi * nq + qi) * c + hd * d + e] = s;
                }
            }
        }
    }
    t([tw, nq, c], out)
}

/// Selective scan by the literal recurrence, with Δ, B, C computed per token
/// by explicit dot products.
pub fn selective_scan(x: &Tensor, p: &SsmParams) -> Tensor {
    let (l, dn) = x.dims2().unwrap();
    let ds = p.d_state();
    let xd = x.data();
    let dot = |w: &Tensor, row: usize, tok: usize| -> f64 {
        (0..dn)
            .map(|i| w.data()[row * dn + i] as f64 * xd[tok * dn + i] as f64)
            .sum()
    };
    let mut out = vec![0.0; l * dn];
    for c in 0..dn {
        let mut h = vec![0.0; ds];
        for tok in 0..l {
            let raw = dot(&p.proj_delta, c, tok) + p.delta_bias.data()[c] as f64;
            let delta = if raw > 20.0 { raw } else { raw.exp().ln_1p() };
            let xv = xd[tok * dn + c] as f64;
            let mut y = 0.0;
            for n in 0..ds {
                let a = -(p.a_log.data()[c * ds + n] as f64).exp();
                let b = dot(&p.proj_b, n, tok) + p.bias_b.data()[n] as f64;
                let cc = dot(&p.proj_c, n, tok) + p.bias_c.data()[n] as f64;
                h[n] = (delta * a).exp() * h[n] + delta * b * xv;
                y += cc * h[n];
            }
            out[tok * dn + c] = y + p.skip_d.data()[c] as f64 * xv;
        }
    }
    t([l, dn], out)
}

/// Convolutional form of a selective scan whose Δ, B and C do not depend on
/// the input: `y_t = sum_j K_j x_{t-j} + D x_t` with `K_j = sum_n C_n Ā_n^j B̄_n`.
/// Only valid when all three projection matrices are zero.
pub fn scan_convolution_form(x: &Tensor, p: &SsmParams) -> Tensor {
    let (l, dn) = x.dims2().unwrap();
    let ds = p.d_state();
    let mut out = vec![0.0; l * dn];
    for c in 0..dn {
        let raw = p.delta_bias.data()[c] as f64;
        let delta = raw.exp().ln_1p();
        let kernel: Vec<f64> = (0..l)
            .map(|j| {
                (0..ds)
                    .map(|n| {
                        let a = -(p.a_log.data()[c * ds + n] as f64).exp();
                        let abar = (delta * a).exp();
                        let bbar = delta * p.bias_b.data()[n] as f64;
                        p.bias_c.data()[n] as f64 * abar.powi(j as i32) * bbar
                    })
                    .sum()
            })
            .collect();
        for tok in 0..l {
            let mut y = p.skip_d.data()[c] as f64 * x.data()[tok * dn + c] as f64;
            for j in 0..=tok {
                y += kernel[j] * x.data()[(tok - j) * dn + c] as f64;
            }
            out[tok * dn + c] = y;
        }
    }
    t([l, dn], out)
}

/// Deformable 3x3 convolution (stride 1, padding 1, no modulation) by
/// explicit per-tap bilinear sampling with zero outside the map.
pub fn deform_conv(f: &Tensor, offsets: &Tensor, w: &Tensor, b: Option<&Tensor>, groups: usize) -> Tensor {
    let (cin, h, wd) = f.dims3().unwrap();
    let (cout, _, k, _) = d4(w);
    let cg = cin / groups;
    let mut out = vec![0.0; cout * h * wd];
    for co in 0..cout {
        for y in 0..h {
            for x in 0..wd {
                let mut s = b.map_or(0.0, |b| b.data()[co] as f64);
                for ci in 0..cin {
                    let g = ci / cg;
                    let plane = &f.data()[ci * h * wd..][..h * wd];
                    for ky in 0..k {
                        for kx in 0..k {
                            let tap = ky * k + kx;
                            let ox = offsets.data()[((2 * (g * k * k + tap)) * h + y) * wd + x] as f64;
                            let oy = offsets.data()[((2 * (g * k * k + tap) + 1) * h + y) * wd + x] as f64;
                            let sx = x as f64 + kx as f64 - 1.0 + ox;
                            let sy = y as f64 + ky as f64 - 1.0 + oy;
                            let wv = w.data()[((co * cin + ci) * k + ky) * k + kx] as f64;
                            s += wv * bilinear_zero_at(plane, h, wd, sx, sy);
                        }
                    }
                }
                out[(co * h + y) * wd + x] = s;
            }
        }
    }
    t([cout, h, wd], out)
}

/// Backward warp: `out(x, y) = F(x + dx(x, y), y + dy(x, y))`, clamp-to-edge.
pub fn warp(f: &Tensor, flow: &Tensor) -> Tensor {
    let (c, h, w) = f.dims3().unwrap();
    let mut out = Vec::with_capacity(f.numel());
    for ch in 0..c {
        let plane = &f.data()[ch * h * w..][..h * w];
        for y in 0..h {
            for x in 0..w {
                let dx = flow.data()[y * w + x] as f64;
                let dy = flow.data()[h * w + y * w + x] as f64;
                out.push(bilinear_at(plane, h, w, x as f64 + dx, y as f64 + dy));
            }
        }
    }
    t([c, h, w], out)
}
