//! Dense row-major `f32` tensor.
//!
//! The tensor is a plain value type: a shape and a contiguous buffer. There
//! is no broadcasting and no strided views; every kernel in [`crate::ops`]
//! takes and returns owned, contiguous tensors.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data[..8]", &preview)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![value; numel],
        }
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> f32) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self {
            shape,
            data: (0..numel).map(f).collect(),
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.shape, self.data)
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(self.rank_error(2)),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(self.rank_error(3)),
        }
    }

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c, d] => Ok((a, b, c, d)),
            _ => Err(self.rank_error(4)),
        }
    }

    fn rank_error(&self, want: usize) -> Error {
        Error::shape(
            "tensor rank",
            format!("expected rank {want}, got shape {:?}", self.shape),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Returns `self` unchanged, or a [`Error::NonFinite`] naming `op`.
    pub fn finite_or(self, op: &'static str) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// Slice `index` along the leading dimension.
    pub fn select(&self, index: usize) -> Result<Tensor> {
        let (&lead, rest) = self
            .shape
            .split_first()
            .ok_or_else(|| Error::shape("select", "cannot select from a scalar"))?;
        if index >= lead {
            return Err(Error::shape(
                "select",
                format!("index {index} out of range for leading dim {lead}"),
            ));
        }
        let inner: usize = rest.iter().product();
        Ok(Tensor {
            shape: rest.to_vec(),
            data: self.data[index * inner..(index + 1) * inner].to_vec(),
        })
    }

    /// Stacks equal-shaped tensors along a new leading dimension.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack", "no tensors given"))?;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for (i, t) in items.iter().enumerate() {
            if t.shape != first.shape {
                return Err(Error::shape(
                    "stack",
                    format!("item {i} has shape {:?}, item 0 {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    /// Concatenates along axis 0 (the channel axis for `[C,H,W]` maps).
    pub fn concat0(items: &[&Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("concat0", "no tensors given"))?;
        let rest = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        for (i, t) in items.iter().enumerate() {
            if t.rank() != first.rank() || &t.shape[1..] != rest {
                return Err(Error::shape(
                    "concat0",
                    format!("item {i} has shape {:?}, item 0 {:?}", t.shape, first.shape),
                ));
            }
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(rest);
        Ok(Tensor { shape, data })
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Multiplies each leading-axis slice `i` of a `[C, ...]` tensor by `factors[i]`.
    pub fn scale_channels(&self, factors: &[f32]) -> Result<Tensor> {
        let lead = *self.shape.first().unwrap_or(&0);
        if factors.len() != lead {
            return Err(Error::shape(
                "scale_channels",
                format!("{} factors for leading dim {lead}", factors.len()),
            ));
        }
        let inner = if lead == 0 { 0 } else { self.numel() / lead };
        let mut out = self.clone();
        for (chunk, &f) in out.data.chunks_mut(inner.max(1)).zip(factors) {
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "max_abs_diff",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// `[C,H,W]` → `[H*W, C]` (pixels become tokens).
    pub fn chw_to_tokens(&self) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        let hw = h * w;
        let mut data = vec![0.0; c * hw];
        for ch in 0..c {
            let src = &self.data[ch * hw..(ch + 1) * hw];
            for (p, &v) in src.iter().enumerate() {
                data[p * c + ch] = v;
            }
        }
        Tensor::new([hw, c], data)
    }

    /// `[H*W, C]` → `[C,H,W]`.
    pub fn tokens_to_chw(&self, h: usize, w: usize) -> Result<Tensor> {
        let (hw, c) = self.dims2()?;
        if hw != h * w {
            return Err(Error::shape(
                "tokens_to_chw",
                format!("{hw} tokens cannot form a {h}x{w} map"),
            ));
        }
        let mut data = vec![0.0; c * hw];
        for p in 0..hw {
            for ch in 0..c {
                data[ch * hw + p] = self.data[p * c + ch];
            }
        }
        Tensor::new([c, h, w], data)
    }

    /// `[N,C,H,W]` → `[N*H*W, C]`.
    pub fn nchw_to_tokens(&self) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        let hw = h * w;
        let mut data = vec![0.0; self.numel()];
        for b in 0..n {
            for ch in 0..c {
                let src = &self.data[(b * c + ch) * hw..][..hw];
                for (p, &v) in src.iter().enumerate() {
                    data[(b * hw + p) * c + ch] = v;
                }
            }
        }
        Tensor::new([n * hw, c], data)
    }

    /// `[N*H*W, C]` → `[N,C,H,W]`.
    pub fn tokens_to_nchw(&self, n: usize, c: usize, h: usize, w: usize) -> Result<Tensor> {
        let (rows, cols) = self.dims2()?;
        if rows != n * h * w || cols != c {
            return Err(Error::shape(
                "tokens_to_nchw",
                format!("[{rows}, {cols}] cannot form [{n},{c},{h},{w}]"),
            ));
        }
        let hw = h * w;
        let mut data = vec![0.0; self.numel()];
        for b in 0..n {
            for p in 0..hw {
                for ch in 0..c {
                    data[(b * c + ch) * hw + p] = self.data[(b * hw + p) * c + ch];
                }
            }
        }
        Tensor::new([n, c, h, w], data)
    }

    /// Transposes the two spatial axes of a `[C,H,W]` map.
    pub fn transpose_hw(&self) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        let mut data = vec![0.0; self.numel()];
        for ch in 0..c {
            let base = ch * h * w;
            for y in 0..h {
                for x in 0..w {
                    data[base + x * h + y] = self.data[base + y * w + x];
                }
            }
        }
        Tensor::new([c, w, h], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new([2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new([2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn tokens_round_trip() {
        let t = Tensor::from_fn([3, 2, 4], |i| i as f32);
        let tok = t.chw_to_tokens().unwrap();
        assert_eq!(tok.shape(), &[8, 3]);
        assert_eq!(tok.data()[1], 8.0);
        assert_eq!(tok.tokens_to_chw(2, 4).unwrap(), t);
    }

    #[test]
    fn transpose_twice_is_identity() {
        let t = Tensor::from_fn([2, 3, 5], |i| (i * 7 % 11) as f32);
        assert_eq!(t.transpose_hw().unwrap().transpose_hw().unwrap(), t);
    }

    #[test]
    fn finite_or_flags_nan() {
        let t = Tensor::new([2], vec![1.0, f32::NAN]).unwrap();
        assert!(matches!(t.finite_or("x"), Err(Error::NonFinite { op: "x" })));
    }

    #[test]
    fn concat_and_select() {
        let a = Tensor::full([1, 2], 1.0);
        let b = Tensor::full([2, 2], 2.0);
        let c = Tensor::concat0(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(c.select(2).unwrap().data(), &[2.0, 2.0]);
        assert!(c.select(3).is_err());
    }
}
