use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Silu,
    /// Tanh approximation of GELU.
    Gelu,
    Sigmoid,
    Relu,
    LeakyRelu(f32),
}

pub const LRELU_SLOPE: f32 = 0.1;

impl Activation {
    #[inline]
    pub fn apply_scalar(self, x: f32) -> f32 {
        let v = x as f64;
        let y = match self {
            Activation::Silu => v * sigmoid64(v),
            Activation::Gelu => {
                let inner = (2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v * v * v);
                0.5 * v * (1.0 + inner.tanh())
            }
            Activation::Sigmoid => sigmoid64(v),
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu(slope) => {
                if v >= 0.0 {
                    v
                } else {
                    v * slope as f64
                }
            }
        };
        y as f32
    }
}

#[inline]
fn sigmoid64(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|x| kind.apply_scalar(x))
}
