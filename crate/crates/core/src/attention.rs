//! Overlapping cross-window attention, cross-frame channel gating, and the
//! encoder block that combines them.
//!
//! Queries are partitioned into non-overlapping `P x P` windows. Keys and
//! values use enlarged `P' x P'` windows centred on each query window
//! (`P' = P(1 + r)`), read from a zero-padded map so every window has the
//! same size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ops::{self, Activation};
use crate::params::{Conv, Init, Linear, Norm, ParamSource};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    /// Query window side `P`.
    pub window: usize,
    /// Overlap rate `r`.
    pub overlap: f64,
    /// Key/value window side `P'`.
    pub kv_window: usize,
    pub heads: usize,
}

impl WindowSpec {
    /// `P'` is `round(P * (1 + r))`, bumped by one when needed so that
    /// `P' - P` is even.
    pub fn new(window: usize, overlap: f64, heads: usize) -> Result<Self> {
        if window == 0 || heads == 0 {
            return Err(Error::invalid("WindowSpec", "window and heads must be >= 1"));
        }
        if !(overlap >= 0.0 && overlap.is_finite()) {
            return Err(Error::invalid("WindowSpec", format!("overlap {overlap} must be >= 0")));
        }
        let mut kv = (window as f64 * (1.0 + overlap)).round() as usize;
        if (kv - window) % 2 == 1 {
            kv += 1;
        }
        Ok(Self {
            window,
            overlap,
            kv_window: kv,
            heads,
        })
    }

    /// Zero padding per side for the key/value windows, `(P' - P) / 2`.
    pub fn margin(&self) -> usize {
        (self.kv_window - self.window) / 2
    }

    pub fn head_dim(&self, channels: usize) -> Result<usize> {
        if !channels.is_multiple_of(self.heads) {
            return Err(Error::invalid(
                "window_attention",
                format!("{channels} channels not divisible by {} heads", self.heads),
            ));
        }
        Ok(channels / self.heads)
    }
}

/// Learnable additive bias indexed by the relative offset between a query
/// token and a key token.
///
/// Query `(qy, qx)` sits at `(qy + m, qx + m)` in key-window coordinates, so
/// per-axis offsets span `[-(P+P')/2 + 1, (P+P')/2 - 1]`, i.e. `P + P' - 1`
/// distinct values.
#[derive(Debug, Clone)]
pub struct RelPosBias {
    /// `[heads, (P + P' - 1)^2]`
    pub table: Tensor,
    window: usize,
    kv_window: usize,
}

impl RelPosBias {
    pub fn span(spec: &WindowSpec) -> usize {
        spec.window + spec.kv_window - 1
    }

    pub fn new(table: Tensor, spec: &WindowSpec) -> Result<Self> {
        let span = Self::span(spec);
        if table.shape() != [spec.heads, span * span] {
            return Err(Error::shape(
                "RelPosBias",
                format!("table {:?}, expected [{}, {}]", table.shape(), spec.heads, span * span),
            ));
        }
        Ok(Self {
            table,
            window: spec.window,
            kv_window: spec.kv_window,
        })
    }

    pub fn zeros(spec: &WindowSpec) -> Self {
        let span = Self::span(spec);
        Self::new(Tensor::zeros([spec.heads, span * span]), spec).unwrap()
    }

    pub fn declare(src: &mut dyn ParamSource, name: &str, spec: &WindowSpec) -> Result<Self> {
        let span = Self::span(spec);
        let table = src.take(name, &[spec.heads, span * span], Init::Zeros)?;
        Self::new(table, spec)
    }

    /// Table column for query token `q` (row-major in the `P x P` window)
    /// and key token `k` (row-major in the `P' x P'` window).
    pub fn index(&self, q: usize, k: usize) -> usize {
        let p = self.window;
        let pk = self.kv_window;
        let m = (pk - p) / 2;
        let half = (p + pk) / 2 - 1;
        let span = p + pk - 1;
        let dy = (q / p + m) as isize - (k / pk) as isize + half as isize;
        let dx = (q % p + m) as isize - (k % pk) as isize + half as isize;
        dy as usize * span + dx as usize
    }

    pub fn value(&self, head: usize, q: usize, k: usize) -> f32 {
        let cols = self.table.shape()[1];
        self.table.data()[head * cols + self.index(q, k)]
    }

    fn dense(&self, head: usize) -> Vec<f32> {
        let nq = self.window * self.window;
        let nk = self.kv_window * self.kv_window;
        let mut out = Vec::with_capacity(nq * nk);
        for q in 0..nq {
            for k in 0..nk {
                out.push(self.value(head, q, k));
            }
        }
        out
    }
}

fn check_divisible(op: &'static str, h: usize, w: usize, p: usize) -> Result<()> {
    if !h.is_multiple_of(p) || !w.is_multiple_of(p) {
        return Err(Error::shape(op, format!("{h}x{w} not divisible by window {p}")));
    }
    Ok(())
}

/// Gathers `side x side` windows stepping by `stride`, starting `margin`
/// pixels before each stride cell. Out-of-map positions read zero.
fn gather_windows(f: &Tensor, stride: usize, side: usize, margin: usize) -> Result<Tensor> {
    let (b, c, h, w) = f.dims4()?;
    let (nh, nw) = (h / stride, w / stride);
    let tokens = side * side;
    let x = f.data();
    let mut out = vec![0.0f32; b * nh * nw * tokens * c];
    out.par_chunks_mut(tokens * c).enumerate().for_each(|(win, dst)| {
        let bi = win / (nh * nw);
        let wy = (win / nw) % nh;
        let wx = win % nw;
        for i in 0..side {
            let y = (wy * stride + i) as isize - margin as isize;
            if y < 0 || y >= h as isize {
                continue;
            }
            for j in 0..side {
                let xx = (wx * stride + j) as isize - margin as isize;
                if xx < 0 || xx >= w as isize {
                    continue;
                }
                let tok = &mut dst[(i * side + j) * c..][..c];
                for (ch, v) in tok.iter_mut().enumerate() {
                    *v = x[((bi * c + ch) * h + y as usize) * w + xx as usize];
                }
            }
        }
    });
    Tensor::new([b * nh * nw, tokens, c], out)
}

/// `[B,C,H,W]` → `[B*nW, P*P, C]`, windows in row-major order, tokens
/// row-major within each window.
pub fn partition_q_windows(f: &Tensor, spec: &WindowSpec) -> Result<Tensor> {
    let (_, _, h, w) = f.dims4()?;
    check_divisible("partition_q_windows", h, w, spec.window)?;
    gather_windows(f, spec.window, spec.window, 0)
}

/// Inverse of [`partition_q_windows`].
pub fn merge_q_windows(
    tokens: &Tensor,
    b: usize,
    h: usize,
    w: usize,
    spec: &WindowSpec,
) -> Result<Tensor> {
    let (nwin, nt, c) = tokens.dims3()?;
    let p = spec.window;
    check_divisible("merge_q_windows", h, w, p)?;
    let (nh, nw) = (h / p, w / p);
    if nwin != b * nh * nw || nt != p * p {
        return Err(Error::shape(
            "merge_q_windows",
            format!("{:?} cannot tile [{b},{c},{h},{w}]", tokens.shape()),
        ));
    }
    let src = tokens.data();
    let mut out = vec![0.0f32; b * c * h * w];
    for win in 0..nwin {
        let bi = win / (nh * nw);
        let wy = (win / nw) % nh;
        let wx = win % nw;
        for i in 0..p {
            for j in 0..p {
                let tok = &src[(win * nt + i * p + j) * c..][..c];
                let (y, x) = (wy * p + i, wx * p + j);
                for (ch, &v) in tok.iter().enumerate() {
                    out[((bi * c + ch) * h + y) * w + x] = v;
                }
            }
        }
    }
    Tensor::new([b, c, h, w], out)
}

/// `[B,C,H,W]` → `[B*nW, P'*P', C]`: one enlarged window per query window,
/// centred on it, over a map zero-padded by `(P' - P)/2` on every side.
pub fn extract_kv_windows(f: &Tensor, spec: &WindowSpec) -> Result<Tensor> {
    let (_, _, h, w) = f.dims4()?;
    check_divisible("extract_kv_windows", h, w, spec.window)?;
    gather_windows(f, spec.window, spec.kv_window, spec.margin())
}

/// Multi-head attention inside each window:
/// `softmax(Q K^T / sqrt(d) + B) V` with `d = C / heads`.
///
/// `q` is `[T, P*P, C]`, `k` and `v` are `[T, P'*P', C]`. The output has the
/// query layout; the output projection is applied by [`cwa_block`].
pub fn window_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    bias: &RelPosBias,
    heads: usize,
) -> Result<Tensor> {
    let (tw, nq, c) = q.dims3()?;
    let (tk, nk, ck) = k.dims3()?;
    if k.shape() != v.shape() || tk != tw || ck != c {
        return Err(Error::shape(
            "window_attention",
            format!("q {:?}, k {:?}, v {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    if nq != bias.window * bias.window || nk != bias.kv_window * bias.kv_window {
        return Err(Error::shape(
            "window_attention",
            format!(
                "{nq} query / {nk} key tokens do not match bias windows {} / {}",
                bias.window, bias.kv_window
            ),
        ));
    }
    if heads == 0 || c % heads != 0 {
        return Err(Error::invalid(
            "window_attention",
            format!("{c} channels not divisible by {heads} heads"),
        ));
    }
    if bias.table.shape()[0] != heads {
        return Err(Error::shape(
            "window_attention",
            format!("bias table has {} heads, expected {heads}", bias.table.shape()[0]),
        ));
    }
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let dense: Vec<Vec<f32>> = (0..heads).map(|h| bias.dense(h)).collect();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = vec![0.0f32; tw * nq * c];
    out.par_chunks_mut(nq * c).enumerate().for_each(|(wi, dst)| {
        let qw = &qd[wi * nq * c..][..nq * c];
        let kw = &kd[wi * nk * c..][..nk * c];
        let vw = &vd[wi * nk * c..][..nk * c];
        let mut logits = vec![0.0f32; nk];
        let mut acc = vec![0.0f64; d];
        for (hd, table) in dense.iter().enumerate() {
            let off = hd * d;
            for qi in 0..nq {
                let qrow = &qw[qi * c + off..][..d];
                let brow = &table[qi * nk..][..nk];
                for (ki, l) in logits.iter_mut().enumerate() {
                    let krow = &kw[ki * c + off..][..d];
                    let s: f64 = qrow.iter().zip(krow).map(|(a, b)| *a as f64 * *b as f64).sum();
                    *l = (s * scale + brow[ki] as f64) as f32;
                }
                ops::softmax_row(&mut logits);
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (ki, &p) in logits.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let vrow = &vw[ki * c + off..][..d];
                    for (a, &vv) in acc.iter_mut().zip(vrow) {
                        *a += p as f64 * vv as f64;
                    }
                }
                for (o, a) in dst[qi * c + off..][..d].iter_mut().zip(&acc) {
                    *o = *a as f32;
                }
            }
        }
    });
    Tensor::new([tw, nq, c], out)?.finite_or("window_attention")
}

#[derive(Debug, Clone)]
pub struct CwaWeights {
    pub to_q: Conv,
    pub to_k: Conv,
    pub to_v: Conv,
    pub proj: Linear,
    pub rel_bias: RelPosBias,
}

impl CwaWeights {
    pub fn declare(src: &mut dyn ParamSource, prefix: &str, c: usize, spec: &WindowSpec) -> Result<Self> {
        Ok(Self {
            to_q: Conv::declare(src, &format!("{prefix}.to_q"), c, c, 1, 1)?,
            to_k: Conv::declare(src, &format!("{prefix}.to_k"), c, c, 1, 1)?,
            to_v: Conv::declare(src, &format!("{prefix}.to_v"), c, c, 1, 1)?,
            proj: Linear::declare(src, &format!("{prefix}.proj"), c, c)?,
            rel_bias: RelPosBias::declare(src, &format!("{prefix}.rel_bias"), spec)?,
        })
    }
}

/// Cross-window attention over a `[B,C,H,W]` map; output has the input shape.
///
/// Maps whose sides are not multiples of `P` are zero-padded (after the
/// 1x1 projections) symmetrically and cropped back afterwards.
pub fn cwa_block(f: &Tensor, w: &CwaWeights, spec: &WindowSpec) -> Result<Tensor> {
    let (b, c, h, wd) = f.dims4()?;
    spec.head_dim(c)?;
    let p = spec.window;
    let (ph, pw) = ((p - h % p) % p, (p - wd % p) % p);
    let pad = |x: Tensor| -> Result<Tensor> {
        if ph == 0 && pw == 0 {
            Ok(x)
        } else {
            ops::pad_zero(&x, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2)
        }
    };
    let xq = pad(w.to_q.forward(f)?)?;
    let xk = pad(w.to_k.forward(f)?)?;
    let xv = pad(w.to_v.forward(f)?)?;
    let (hp, wp) = (h + ph, wd + pw);

    let q = partition_q_windows(&xq, spec)?;
    let k = extract_kv_windows(&xk, spec)?;
    let v = extract_kv_windows(&xv, spec)?;
    let attn = window_attention(&q, &k, &v, &w.rel_bias, spec.heads)?;
    let projected = w.proj.forward(&attn)?;
    let merged = merge_q_windows(&projected, b, hp, wp, spec)?;
    if ph == 0 && pw == 0 {
        Ok(merged)
    } else {
        ops::crop(&merged, ph / 2, pw / 2, h, wd)
    }
}

/// Cross-frame attention parameters: `C -> C/beta -> C` convolutions whose
/// pooled output gates every channel.
#[derive(Debug, Clone)]
pub struct CfaParams {
    pub squeeze: Conv,
    pub expand: Conv,
    pub beta: usize,
}

impl CfaParams {
    pub fn declare(src: &mut dyn ParamSource, prefix: &str, c: usize, beta: usize) -> Result<Self> {
        if beta == 0 || !c.is_multiple_of(beta) {
            return Err(Error::invalid(
                "CfaParams",
                format!("{c} channels not divisible by beta={beta}"),
            ));
        }
        Ok(Self {
            squeeze: Conv::declare(src, &format!("{prefix}.squeeze"), c, c / beta, 3, 1)?,
            expand: Conv::declare(src, &format!("{prefix}.expand"), c / beta, c, 3, 1)?,
            beta,
        })
    }
}

/// Per-channel gate `sigmoid(GAP(expand(gelu(squeeze(F)))))`, shape `[B, C]`.
pub fn cfa_gate(f: &Tensor, p: &CfaParams) -> Result<Tensor> {
    let (b, c, h, w) = f.dims4()?;
    if p.beta == 0 || c % p.beta != 0 {
        return Err(Error::invalid(
            "cfa_block",
            format!("{c} channels not divisible by beta={}", p.beta),
        ));
    }
    let s = ops::activation(&p.squeeze.forward(f)?, Activation::Gelu);
    let e = p.expand.forward(&s)?;
    if e.shape() != f.shape() {
        return Err(Error::shape(
            "cfa_block",
            format!("gate map {:?} vs input {:?}", e.shape(), f.shape()),
        ));
    }
    let hw = h * w;
    let gate: Vec<f32> = e
        .data()
        .chunks(hw)
        .map(|plane| {
            let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / hw as f64;
            Activation::Sigmoid.apply_scalar(mean as f32)
        })
        .collect();
    Tensor::new([b, c], gate)
}

/// `F ⊙ gate`, the gate broadcast over the spatial dims.
pub fn cfa_block(f: &Tensor, p: &CfaParams) -> Result<Tensor> {
    let gate = cfa_gate(f, p)?;
    let (_, _, h, w) = f.dims4()?;
    let hw = h * w;
    let mut out = f.clone();
    for (plane, &g) in out.data_mut().chunks_mut(hw).zip(gate.data()) {
        plane.iter_mut().for_each(|v| *v *= g);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct McaWeights {
    pub norm1: Norm,
    pub cwa: CwaWeights,
    /// Operates on all frames stacked along the channel axis.
    pub cfa: CfaParams,
    pub norm2: Norm,
    pub fc1: Linear,
    pub fc2: Linear,
}

pub const MLP_RATIO: usize = 2;

impl McaWeights {
    pub fn declare(
        src: &mut dyn ParamSource,
        prefix: &str,
        n_frames: usize,
        c: usize,
        spec: &WindowSpec,
        beta: usize,
    ) -> Result<Self> {
        Ok(Self {
            norm1: Norm::declare(src, &format!("{prefix}.norm1"), c)?,
            cwa: CwaWeights::declare(src, &format!("{prefix}.cwa"), c, spec)?,
            cfa: CfaParams::declare(src, &format!("{prefix}.cfa"), n_frames * c, beta)?,
            norm2: Norm::declare(src, &format!("{prefix}.norm2"), c)?,
            fc1: Linear::declare(src, &format!("{prefix}.fc1"), c, MLP_RATIO * c)?,
            fc2: Linear::declare(src, &format!("{prefix}.fc2"), MLP_RATIO * c, c)?,
        })
    }
}

/// Multi-cross attention encoder block over `[N,C,H,W]` frame features:
///
/// ```text
/// F_lw = CWA(LN(F0));  F_cf = CFA(LN(F0))
/// F_mc = F_lw + alpha * F_cf + F0
/// F_d  = MLP(LN(F_mc)) + F_mc
/// ```
pub fn mca_encoder_block(f0: &Tensor, w: &McaWeights, spec: &WindowSpec, alpha: f32) -> Result<Tensor> {
    let (n, c, h, wd) = f0.dims4()?;
    let normed = w.norm1.forward_channels(f0)?;
    let lw = cwa_block(&normed, &w.cwa, spec)?;
    let mut mc = lw.add(f0)?;
    if alpha != 0.0 {
        let stacked = normed.reshape([1, n * c, h, wd])?;
        let cf = cfa_block(&stacked, &w.cfa)?.reshape([n, c, h, wd])?;
        for (m, v) in mc.data_mut().iter_mut().zip(cf.data()) {
            *m += alpha * v;
        }
    }
    let tokens = w.norm2.forward(&mc.nchw_to_tokens()?)?;
    let hidden = ops::activation(&w.fc1.forward(&tokens)?, Activation::Gelu);
    let mlp = w.fc2.forward(&hidden)?.tokens_to_nchw(n, c, h, wd)?;
    mlp.add(&mc)?.finite_or("mca_encoder_block")
}
