//! Primitive numerical kernels shared by every block of the network.

mod activation;
mod conv;
mod dense;
mod spatial;

pub use activation::{activation, Activation, LRELU_SLOPE};
pub use conv::{conv2d, conv2d_chw, Conv2dParams};
pub use dense::{layer_norm, layer_norm_channels, linear, softmax_lastdim, LAYER_NORM_EPS};
pub(crate) use dense::softmax_row;
pub use spatial::{
    avg_pool2d, bilinear_sample, crop, pad_zero, pixel_shuffle, pixel_unshuffle,
    upsample_bilinear,
};
pub(crate) use spatial::{sample_clamped, sample_zero_pad};
