//! Multi-frame super-resolution of raw Bayer bursts.
//!
//! A burst of `N` packed RGGB frames (`[N, 4, h, w]`) goes through a shared
//! shallow convolution, a stack of multi-cross attention encoders, pyramid
//! deformable alignment against frame 0, a state-space decoder stack and a
//! pixel-shuffle reconstruction head that returns a `[3, 8h, 8w]` image.
//!
//! ```no_run
//! use burstforge::{align::BlockMatching, model::{Checkpoint, Model, ModelConfig}, simulate};
//!
//! let cfg = ModelConfig::default();
//! let model = Model::load(&Checkpoint::random(&cfg, 0)?)?;
//! let hr = simulate::smooth_image(3, 384, 384, 4.0, 1);
//! let spec = simulate::SyntheticBurstSpec { n_frames: cfg.n_frames, ..Default::default() };
//! let burst = simulate::generate_burst(&hr, &spec)?;
//! let sr = model.forward(&burst.frames, &BlockMatching::default())?;
//! assert_eq!(sr.shape(), &[3, 384, 384]);
//! # Ok::<(), burstforge::Error>(())
//! ```

pub mod align;
pub mod attention;
pub mod bench;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod oracle;
pub mod params;
pub mod rng;
pub mod selftest;
pub mod simulate;
pub mod ssm;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{Checkpoint, Model, ModelConfig};
pub use tensor::Tensor;
