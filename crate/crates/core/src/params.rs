//! Named parameters and the small layer containers built from them.
//!
//! Every block declares its parameters through [`ParamSource::take`]. The
//! same declaration code therefore drives random initialization, loading
//! from a checkpoint and enumeration of the expected tensor directory, so the
//! three can never disagree about names or shapes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ops::{self, Conv2dParams};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Initialization rule attached to a declared parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanIn(usize),
    /// Zero even under random initialization (biases, bias tables, offset heads).
    Zeros,
    Const(f32),
    /// `log(-A)` with `A` log-spaced in `[-1, -1/16]` along the state axis.
    ALog,
    /// Inverse softplus of the given step size.
    InverseSoftplus(f32),
}

impl Init {
    fn materialize(self, shape: &[usize], rng: &mut SplitMix64, zero_weights: bool) -> Tensor {
        match self {
            Init::FanIn(_) if zero_weights => Tensor::zeros(shape),
            Init::FanIn(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                rng.tensor_uniform(shape, -bound, bound)
            }
            Init::Zeros => Tensor::zeros(shape),
            Init::Const(v) => Tensor::full(shape, v),
            Init::ALog => {
                let ds = *shape.last().unwrap_or(&1);
                let lo = (1.0f64 / 16.0).ln();
                Tensor::from_fn(shape, |i| {
                    let n = i % ds;
                    let frac = if ds > 1 { n as f64 / (ds - 1) as f64 } else { 1.0 };
                    // -A runs from 1/16 to 1; store log(-A).
                    (lo * (1.0 - frac)) as f32
                })
            }
            Init::InverseSoftplus(v) => {
                let v = v as f64;
                Tensor::full(shape, (v.exp_m1()).ln() as f32)
            }
        }
    }
}

pub trait ParamSource {
    fn take(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor>;
}

/// Creates every declared parameter from its [`Init`] rule and records it.
pub struct InitSource {
    rng: SplitMix64,
    zero_weights: bool,
    pub tensors: BTreeMap<String, Tensor>,
    pub order: Vec<String>,
}

impl InitSource {
    pub fn random(seed: u64) -> Self {
        Self {
            rng: SplitMix64::new(seed),
            zero_weights: false,
            tensors: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    /// All fan-in weights zero; structural constants (norm gains, residual
    /// scales, scan dynamics) keep their documented values.
    pub fn zeroed() -> Self {
        Self {
            zero_weights: true,
            ..Self::random(0)
        }
    }
}

impl ParamSource for InitSource {
    fn take(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.tensors.contains_key(name) {
            return Err(Error::Checkpoint {
                name: name.to_string(),
                reason: "declared twice".into(),
            });
        }
        let t = init.materialize(shape, &mut self.rng, self.zero_weights);
        self.tensors.insert(name.to_string(), t.clone());
        self.order.push(name.to_string());
        Ok(t)
    }
}

/// Pulls declared parameters out of a loaded tensor map, checking shapes.
pub struct LoadSource<'a> {
    tensors: &'a BTreeMap<String, Tensor>,
    seen: usize,
}

impl<'a> LoadSource<'a> {
    pub fn new(tensors: &'a BTreeMap<String, Tensor>) -> Self {
        Self { tensors, seen: 0 }
    }

    /// Fails on the first tensor in the map that no block declared.
    pub fn finish(self, declared: &[String]) -> Result<()> {
        if self.seen == self.tensors.len() {
            return Ok(());
        }
        let extra = self
            .tensors
            .keys()
            .find(|k| !declared.contains(k))
            .cloned()
            .unwrap_or_default();
        Err(Error::Checkpoint {
            name: extra,
            reason: "not used by this model configuration".into(),
        })
    }
}

impl ParamSource for LoadSource<'_> {
    fn take(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Tensor> {
        let t = self.tensors.get(name).ok_or_else(|| Error::Checkpoint {
            name: name.to_string(),
            reason: "missing".into(),
        })?;
        if t.shape() != shape {
            return Err(Error::Checkpoint {
                name: name.to_string(),
                reason: format!("shape {:?}, configuration implies {shape:?}", t.shape()),
            });
        }
        self.seen += 1;
        Ok(t.clone())
    }
}

/// Records names in declaration order while delegating to another source.
pub struct Recording<'a, S: ParamSource + ?Sized> {
    pub inner: &'a mut S,
    pub names: Vec<String>,
}

impl<S: ParamSource + ?Sized> ParamSource for Recording<'_, S> {
    fn take(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        self.names.push(name.to_string());
        self.inner.take(name, shape, init)
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: Tensor,
    pub bias: Tensor,
    pub params: Conv2dParams,
}

impl Conv {
    pub fn declare(
        src: &mut dyn ParamSource,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        groups: usize,
    ) -> Result<Self> {
        let fan_in = cin / groups * k * k;
        Ok(Self {
            weight: src.take(&format!("{name}.weight"), &[cout, cin / groups, k, k], Init::FanIn(fan_in))?,
            bias: src.take(&format!("{name}.bias"), &[cout], Init::Zeros)?,
            params: Conv2dParams::same(k).with_groups(groups),
        })
    }

    /// Like [`Conv::declare`] but the weight is zero-initialized.
    pub fn declare_zero(
        src: &mut dyn ParamSource,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: src.take(&format!("{name}.weight"), &[cout, cin, k, k], Init::Zeros)?,
            bias: src.take(&format!("{name}.bias"), &[cout], Init::Zeros)?,
            params: Conv2dParams::same(k),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv2d(x, &self.weight, Some(&self.bias), self.params)
    }

    /// Forward on a single `[C,H,W]` map.
    pub fn forward_chw(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv2d_chw(x, &self.weight, Some(&self.bias), self.params)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn declare(src: &mut dyn ParamSource, name: &str, din: usize, dout: usize) -> Result<Self> {
        Ok(Self {
            weight: src.take(&format!("{name}.weight"), &[dout, din], Init::FanIn(din))?,
            bias: src.take(&format!("{name}.bias"), &[dout], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::linear(x, &self.weight, Some(&self.bias))
    }
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl Norm {
    pub fn declare(src: &mut dyn ParamSource, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: src.take(&format!("{name}.gamma"), &[dim], Init::Const(1.0))?,
            beta: src.take(&format!("{name}.beta"), &[dim], Init::Zeros)?,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            gamma: Tensor::full([dim], 1.0),
            beta: Tensor::zeros([dim]),
        }
    }

    /// Normalizes over the last dimension.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::layer_norm(x, &self.gamma, &self.beta, ops::LAYER_NORM_EPS)
    }

    /// Normalizes each pixel over the channel axis of a `[C,H,W]` or `[N,C,H,W]` map.
    pub fn forward_channels(&self, x: &Tensor) -> Result<Tensor> {
        match x.rank() {
            3 => ops::layer_norm_channels(x, &self.gamma, &self.beta),
            4 => {
                let (n, c, h, w) = x.dims4()?;
                let tokens = x.nchw_to_tokens()?;
                self.forward(&tokens)?.tokens_to_nchw(n, c, h, w)
            }
            _ => Err(Error::shape(
                "layer_norm_channels",
                format!("expected [C,H,W] or [N,C,H,W], got {:?}", x.shape()),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alog_spans_documented_range() {
        let t = Init::ALog.materialize(&[2, 16], &mut SplitMix64::new(0), false);
        let a: Vec<f64> = t.data().iter().map(|&v| -(v as f64).exp()).collect();
        assert!((a[0] + 1.0 / 16.0).abs() < 1e-6);
        assert!((a[15] + 1.0).abs() < 1e-6);
        assert!(a.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn inverse_softplus_round_trips() {
        let t = Init::InverseSoftplus(0.05).materialize(&[1], &mut SplitMix64::new(0), false);
        let sp = (t.data()[0] as f64).exp().ln_1p();
        assert!((sp - 0.05).abs() < 1e-6);
    }

    #[test]
    fn load_source_reports_missing_and_shape() {
        let mut map = BTreeMap::new();
        map.insert("a.weight".to_string(), Tensor::zeros([2, 3]));
        let mut src = LoadSource::new(&map);
        let err = src.take("a.weight", &[3, 2], Init::Zeros).unwrap_err();
        assert!(err.to_string().contains("a.weight"));
        let err = src.take("b", &[1], Init::Zeros).unwrap_err();
        assert!(err.to_string().contains("`b`: missing"));
    }
}
