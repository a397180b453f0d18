//! Kernels that act along the last dimension: affine maps, layer norm and
//! softmax.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Affine map over the last dimension: `y = x W^T + b`, batched over every
/// leading dimension. `weight` is `[Dout, Din]`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (dout, din) = weight.dims2()?;
    let last = *input
        .shape()
        .last()
        .ok_or_else(|| Error::shape("linear", "input must have rank >= 1"))?;
    if last != din {
        return Err(Error::shape(
            "linear",
            format!("input last dim {last}, weight expects {din}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [dout] {
            return Err(Error::shape(
                "linear",
                format!("bias shape {:?}, expected [{dout}]", b.shape()),
            ));
        }
    }
    let rows = if din == 0 { 0 } else { input.numel() / din };
    let x = input.data();
    let w = weight.data();
    let mut out = vec![0.0f32; rows * dout];
    out.par_chunks_mut(dout.max(1))
        .enumerate()
        .for_each(|(r, dst)| {
            let xr = &x[r * din..][..din];
            for (o, d) in dst.iter_mut().enumerate() {
                let wr = &w[o * din..][..din];
                let mut acc = bias.map_or(0.0, |b| b.data()[o] as f64);
                for (a, b) in xr.iter().zip(wr) {
                    acc += *a as f64 * *b as f64;
                }
                *d = acc as f32;
            }
        });
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = dout;
    Tensor::new(shape, out)?.finite_or("linear")
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes each last-dimension row to zero mean and unit (biased)
/// variance, then applies `gamma * x + beta`.
pub fn layer_norm(input: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let d = *input
        .shape()
        .last()
        .ok_or_else(|| Error::shape("layer_norm", "input must have rank >= 1"))?;
    if d == 0 {
        return Err(Error::shape("layer_norm", "last dimension is empty"));
    }
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "gamma {:?} / beta {:?} must both be [{d}]",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let g = gamma.data();
    let b = beta.data();
    let mut out = input.clone();
    out.data_mut().par_chunks_mut(d).for_each(|row| {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row
            .iter()
            .map(|&v| {
                let c = v as f64 - mean;
                c * c
            })
            .sum::<f64>()
            / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (i, v) in row.iter_mut().enumerate() {
            *v = ((*v as f64 - mean) * inv * g[i] as f64 + b[i] as f64) as f32;
        }
    });
    out.finite_or("layer_norm")
}

/// Layer norm over the channel axis of a `[C,H,W]` map (each pixel is one row).
pub fn layer_norm_channels(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let (_, h, w) = input.dims3()?;
    let tokens = input.chw_to_tokens()?;
    layer_norm(&tokens, gamma, beta, LAYER_NORM_EPS)?.tokens_to_chw(h, w)
}

/// Numerically stable softmax over the last dimension.
pub fn softmax_lastdim(input: &Tensor) -> Result<Tensor> {
    let d = *input
        .shape()
        .last()
        .ok_or_else(|| Error::shape("softmax", "input must have rank >= 1"))?;
    if d == 0 {
        return Err(Error::shape("softmax", "last dimension is empty"));
    }
    let mut out = input.clone();
    out.data_mut().par_chunks_mut(d).for_each(softmax_row);
    out.finite_or("softmax")
}

pub(crate) fn softmax_row(row: &mut [f32]) {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let mut sum = 0.0f64;
    let mut exps: Vec<f64> = Vec::with_capacity(row.len());
    for &v in row.iter() {
        let e = (v as f64 - max).exp();
        sum += e;
        exps.push(e);
    }
    for (v, e) in row.iter_mut().zip(exps) {
        *v = (e / sum) as f32;
    }
}
