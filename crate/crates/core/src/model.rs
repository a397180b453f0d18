//! The end-to-end network: shallow features, encoder stack, flow-guided
//! alignment, frame merge, decoder stack and two-stage reconstruction.
//!
//! ```text
//! burst [N,4,h,w] ─ conv3x3 ─ MCA x n_enc ─ pixel_shuffle ─ 1x1 ─┐
//!       └ pixel_shuffle ─ conv 1→3 ─ flow provider ─ pyramid ──── align
//! merge 1x1 (N·C' → C') ─ decoders (+ s_res skip) ─ 2 x [conv, shuffle, +skip] ─ conv → RGB
//! ```

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{build_flow_pyramid, pyramid_align, AlignParams, FlowField, FlowProvider};
use crate::attention::{mca_encoder_block, McaWeights, WindowSpec};
use crate::error::{Error, Result};
use crate::ops::{self, Activation, LRELU_SLOPE};
use crate::params::{Conv, InitSource, LoadSource, ParamSource, Recording};
use crate::ssm::{decoder_block, DecoderParams};
use crate::tensor::Tensor;

/// Architecture hyperparameters. Field names are the keys of the `[model]`
/// table in run configs and of the checkpoint header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_frames: usize,
    /// Encoder width `C`.
    pub enc_channels: usize,
    /// Width after lifting, `C'`.
    pub fused_channels: usize,
    pub n_encoders: usize,
    pub n_decoders: usize,
    /// Query window side `P`.
    pub window: usize,
    /// Key/value window overlap `r`.
    pub overlap: f64,
    pub heads: usize,
    /// Weight of the cross-frame branch in the encoder.
    pub alpha: f32,
    /// Channel reduction of the cross-frame gate.
    pub beta: usize,
    /// Inner expansion `λ` of the residual Mamba block.
    pub expand: usize,
    pub d_state: usize,
    /// Scale of the skip around the decoder stack.
    pub s_res: f32,
    /// Channel compression `s_b` of the local bottleneck.
    pub bottleneck: usize,
    pub upscale: usize,
    pub max_flow: f32,
    pub max_offset: f32,
    pub deform_groups: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_frames: 4,
            enc_channels: 24,
            fused_channels: 32,
            n_encoders: 4,
            n_decoders: 4,
            window: 8,
            overlap: 0.5,
            heads: 4,
            alpha: 1.0,
            beta: 4,
            expand: 2,
            d_state: 16,
            s_res: 1.0,
            bottleneck: 4,
            upscale: 4,
            max_flow: 8.0,
            max_offset: 4.0,
            deform_groups: 4,
        }
    }
}

impl ModelConfig {
    /// The 14-frame configuration.
    pub fn full_burst() -> Self {
        Self {
            n_frames: 14,
            ..Self::default()
        }
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.window, self.overlap, self.heads)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::invalid("ModelConfig", detail));
        let (c, cf) = (self.enc_channels, self.fused_channels);
        if self.n_frames == 0 {
            return bad("n_frames must be >= 1".into());
        }
        if self.upscale != 4 {
            return bad(format!("upscale must be 4, got {}", self.upscale));
        }
        if c == 0 || c % 4 != 0 {
            return bad(format!("enc_channels {c} must be a positive multiple of 4"));
        }
        if self.heads == 0 || c % self.heads != 0 {
            return bad(format!("enc_channels {c} not divisible by heads {}", self.heads));
        }
        if self.beta == 0 || !(self.n_frames * c).is_multiple_of(self.beta) || cf % self.beta != 0 {
            return bad(format!("beta {} must divide n_frames*enc_channels and fused_channels", self.beta));
        }
        if cf == 0 || self.bottleneck == 0 || cf % self.bottleneck != 0 {
            return bad(format!("bottleneck {} must divide fused_channels {cf}", self.bottleneck));
        }
        if self.deform_groups == 0 || cf % self.deform_groups != 0 {
            return bad(format!("deform_groups {} must divide fused_channels {cf}", self.deform_groups));
        }
        if self.expand == 0 || self.d_state == 0 {
            return bad("expand and d_state must be >= 1".into());
        }
        if !(self.max_flow >= 0.0 && self.max_offset >= 0.0) {
            return bad("max_flow and max_offset must be >= 0".into());
        }
        if !(self.alpha.is_finite() && self.s_res.is_finite()) {
            return bad("alpha and s_res must be finite".into());
        }
        self.window_spec()?;
        Ok(())
    }

    /// Every parameter name in declaration order.
    pub fn parameter_names(&self) -> Result<Vec<String>> {
        let mut inner = InitSource::zeroed();
        let mut rec = Recording {
            inner: &mut inner,
            names: Vec::new(),
        };
        Weights::declare(self, &mut rec)?;
        Ok(rec.names)
    }
}

/// Named weights plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    fn from_source(config: &ModelConfig, mut src: InitSource) -> Result<Self> {
        config.validate()?;
        Weights::declare(config, &mut src)?;
        Ok(Self {
            config: config.clone(),
            tensors: src.tensors,
        })
    }

    /// Fan-in uniform initialization from `seed`.
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::from_source(config, InitSource::random(seed))
    }

    /// All learned weights zero, structural constants at their defaults.
    pub fn zeroed(config: &ModelConfig) -> Result<Self> {
        Self::from_source(config, InitSource::zeroed())
    }

    /// Hand-built weights that turn the network into a plain upsampler.
    ///
    /// * shallow conv: channels 0..4 copy R, 4..8 the mean of both greens,
    ///   8..12 B, so the pixel shuffle in the lift yields nearest-upsampled
    ///   R, G, B planes in channels 0, 1, 2;
    /// * encoders: `norm1.gamma = 0` and zero weights, making each block the
    ///   identity;
    /// * lift, deformable layers and pyramid fusion: identity on the
    ///   current level; the offset heads stay zero;
    /// * merge: frame average divided by `1 + s_res`, which the decoder skip
    ///   undoes (decoders are zero with unit scales, hence identity);
    /// * reconstruction: each stage replicates every channel into its four
    ///   sub-pixels (nearest 2x upsampling), the skips are zero and the last
    ///   conv copies channels 0..3.
    ///
    /// For inputs in `[0, 1]` every leaky ReLU sees non-negative values, so
    /// the output is the reference frame's packed colors upsampled 8x by
    /// pixel replication (frames averaged).
    pub fn identity(config: &ModelConfig) -> Result<Self> {
        let mut ck = Self::zeroed(config)?;
        let c = config.enc_channels;
        let cf = config.fused_channels;
        let n = config.n_frames;
        if c < 12 || cf < 3 {
            return Err(Error::invalid(
                "identity checkpoint",
                "needs enc_channels >= 12 and fused_channels >= 3",
            ));
        }
        let set = |ck: &mut Self, name: &str, idx: &[usize], v: f32| -> Result<()> {
            let t = ck.tensors.get_mut(name).ok_or_else(|| Error::Checkpoint {
                name: name.to_string(),
                reason: "missing".into(),
            })?;
            let shape = t.shape().to_vec();
            let mut off = 0;
            for (i, (&ix, &d)) in idx.iter().zip(&shape).enumerate() {
                debug_assert!(ix < d, "index {i} out of range");
                off = off * d + ix;
            }
            t.data_mut()[off] = v;
            Ok(())
        };

        for o in 0..12 {
            let band = o / 4;
            match band {
                0 => set(&mut ck, "shallow.weight", &[o, 0, 1, 1], 1.0)?,
                1 => {
                    set(&mut ck, "shallow.weight", &[o, 1, 1, 1], 0.5)?;
                    set(&mut ck, "shallow.weight", &[o, 2, 1, 1], 0.5)?;
                }
                _ => set(&mut ck, "shallow.weight", &[o, 3, 1, 1], 1.0)?,
            }
        }
        for e in 0..config.n_encoders {
            let g = format!("encoder{e}.norm1.gamma");
            let t = ck.tensors.get_mut(&g).expect("declared");
            *t = Tensor::zeros(t.shape().to_vec());
        }
        for k in 0..3 {
            set(&mut ck, "to_rgb.weight", &[k, 0, 1, 1], 1.0)?;
            set(&mut ck, "lift.weight", &[k, k, 0, 0], 1.0)?;
        }
        for l in 0..crate::align::PYRAMID_LEVELS {
            for k in 0..cf {
                set(&mut ck, &format!("align.l{l}.dcn1.weight"), &[k, k, 1, 1], 1.0)?;
                set(&mut ck, &format!("align.l{l}.dcn2.weight"), &[k, k, 1, 1], 1.0)?;
                if l + 1 < crate::align::PYRAMID_LEVELS {
                    set(&mut ck, &format!("align.l{l}.fuse.weight"), &[k, k, 0, 0], 1.0)?;
                }
            }
        }
        let w = 1.0 / (n as f32 * (1.0 + config.s_res));
        for i in 0..n {
            for k in 0..cf {
                set(&mut ck, "merge.weight", &[k, i * cf + k, 0, 0], w)?;
            }
        }
        for s in ["recon.up1", "recon.up2"] {
            for k in 0..cf {
                for j in 0..4 {
                    set(&mut ck, &format!("{s}.weight"), &[k * 4 + j, k, 1, 1], 1.0)?;
                }
            }
        }
        for k in 0..3 {
            set(&mut ck, "recon.out.weight", &[k, k, 1, 1], 1.0)?;
        }
        Ok(ck)
    }
}

#[derive(Debug, Clone)]
struct Weights {
    shallow: Conv,
    encoders: Vec<McaWeights>,
    to_rgb: Conv,
    lift: Conv,
    align: AlignParams,
    merge: Conv,
    decoders: Vec<DecoderParams>,
    up1: Conv,
    skip1: Conv,
    up2: Conv,
    skip2: Conv,
    out: Conv,
}

impl Weights {
    fn declare(cfg: &ModelConfig, src: &mut dyn ParamSource) -> Result<Self> {
        let (n, c, cf) = (cfg.n_frames, cfg.enc_channels, cfg.fused_channels);
        let spec = cfg.window_spec()?;
        let shallow = Conv::declare(src, "shallow", 4, c, 3, 1)?;
        let encoders = (0..cfg.n_encoders)
            .map(|e| McaWeights::declare(src, &format!("encoder{e}"), n, c, &spec, cfg.beta))
            .collect::<Result<Vec<_>>>()?;
        let to_rgb = Conv::declare(src, "to_rgb", 1, 3, 3, 1)?;
        let lift = Conv::declare(src, "lift", c / 4, cf, 1, 1)?;
        let align = AlignParams::declare(src, "align", cf, cfg.deform_groups, cfg.max_offset)?;
        let merge = Conv::declare(src, "merge", n * cf, cf, 1, 1)?;
        let decoders = (0..cfg.n_decoders)
            .map(|d| {
                DecoderParams::declare(
                    src,
                    &format!("decoder{d}"),
                    cf,
                    cfg.expand,
                    cfg.d_state,
                    cfg.bottleneck,
                    cfg.beta,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shallow,
            encoders,
            to_rgb,
            lift,
            align,
            merge,
            decoders,
            up1: Conv::declare(src, "recon.up1", cf, 4 * cf, 3, 1)?,
            skip1: Conv::declare(src, "recon.skip1", cf, cf, 1, 1)?,
            up2: Conv::declare(src, "recon.up2", cf, 4 * cf, 3, 1)?,
            skip2: Conv::declare(src, "recon.skip2", cf, cf, 1, 1)?,
            out: Conv::declare(src, "recon.out", cf, 3, 3, 1)?,
        })
    }
}

/// A configured network with loaded weights. Immutable; safe to share.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    spec: WindowSpec,
    w: Weights,
}

impl Model {
    /// Binds a checkpoint. Missing, misshapen or unused tensors are reported
    /// by name; declaration order decides which one is reported first.
    pub fn load(ck: &Checkpoint) -> Result<Self> {
        ck.config.validate()?;
        let mut src = LoadSource::new(&ck.tensors);
        let mut rec = Recording {
            inner: &mut src,
            names: Vec::new(),
        };
        let w = Weights::declare(&ck.config, &mut rec)?;
        let names = rec.names;
        src.finish(&names)?;
        Ok(Self {
            spec: ck.config.window_spec()?,
            config: ck.config.clone(),
            w,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_burst(&self, burst: &Tensor) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = burst.dims4()?;
        if c != 4 {
            return Err(Error::shape("shallow_extract", format!("expected 4 packed channels, got {c}")));
        }
        if n != self.config.n_frames {
            return Err(Error::shape(
                "forward",
                format!("burst has {n} frames, model is configured for {}", self.config.n_frames),
            ));
        }
        if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
            return Err(Error::shape(
                "forward",
                format!("packed frames must have even, non-zero sides, got {h}x{w}"),
            ));
        }
        Ok((n, h, w))
    }

    /// Per-frame 3x3 conv `4 → C`: `[N,4,h,w] → [N,C,h,w]`.
    pub fn shallow_extract(&self, burst: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = burst.dims4()?;
        if c != 4 {
            return Err(Error::shape("shallow_extract", format!("expected 4 packed channels, got {c}")));
        }
        self.w.shallow.forward(burst)
    }

    /// The encoder stack; shape preserving.
    pub fn encode(&self, f0: &Tensor) -> Result<Tensor> {
        let mut f = f0.clone();
        for enc in &self.w.encoders {
            f = mca_encoder_block(&f, enc, &self.spec, self.config.alpha)?;
        }
        Ok(f)
    }

    /// Mosaic view of each packed frame expanded to 3 channels:
    /// `[N,4,h,w] → [N,3,2h,2w]`. Only feeds the flow estimator.
    pub fn to_rgb_for_flow(&self, burst: &Tensor) -> Result<Tensor> {
        self.w.to_rgb.forward(&ops::pixel_shuffle(burst, 2)?)
    }

    /// `[N,C,h,w] → [N,C',2h,2w]`.
    pub fn lift(&self, fd: &Tensor) -> Result<Tensor> {
        self.w.lift.forward(&ops::pixel_shuffle(fd, 2)?)
    }

    /// Aligns every lifted frame to frame 0; `flows[i]` maps frame `i` onto it.
    pub fn align(&self, lifted: &Tensor, flows: &[FlowField]) -> Result<Tensor> {
        let (n, _, _, _) = lifted.dims4()?;
        if flows.len() != n {
            return Err(Error::invalid("align", format!("{} flows for {n} frames", flows.len())));
        }
        let reference = lifted.select(0)?;
        let aligned = (0..n)
            .into_par_iter()
            .map(|i| {
                let pyr = build_flow_pyramid(&flows[i])?;
                pyramid_align(&lifted.select(i)?, &reference, &pyr, &self.w.align)
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack(&aligned)
    }

    /// Frame merge followed by the decoder stack with its scaled skip:
    /// `F_f = D(F_m) + s_res * F_m`.
    pub fn fuse_decode(&self, fa: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = fa.dims4()?;
        let merged = self.w.merge.forward(&fa.clone().reshape([1, n * c, h, w])?)?;
        let (_, cm, _, _) = merged.dims4()?;
        let fm = merged.reshape([cm, h, w])?;
        let mut d = fm.clone();
        for dec in &self.w.decoders {
            d = decoder_block(&d, dec)?;
        }
        let s = self.config.s_res;
        Ok(Tensor::from_fn(fm.shape().to_vec(), |i| d.data()[i] + s * fm.data()[i]))
    }

    /// Two `x2` stages, each `lrelu(shuffle(conv(x)) + up(proj(skip)))`,
    /// then a 3x3 conv to RGB. `[C',H,W] → [3,4H,4W]`.
    pub fn reconstruct(&self, ff: &Tensor, skip: &Tensor) -> Result<Tensor> {
        let (c, h, w) = ff.dims3()?;
        if skip.shape() != ff.shape() {
            return Err(Error::shape(
                "reconstruct",
                format!("skip {:?} vs features {:?}", skip.shape(), ff.shape()),
            ));
        }
        let skip4 = skip.clone().reshape([1, c, h, w])?;
        let mut x = ff.clone().reshape([1, c, h, w])?;
        for (k, (up, proj)) in [(&self.w.up1, &self.w.skip1), (&self.w.up2, &self.w.skip2)]
            .into_iter()
            .enumerate()
        {
            let y = ops::pixel_shuffle(&up.forward(&x)?, 2)?;
            let s = ops::upsample_bilinear(&proj.forward(&skip4)?, 2 << k)?;
            x = ops::activation(&y.add(&s)?, Activation::LeakyRelu(LRELU_SLOPE));
        }
        let out = self.w.out.forward(&x)?;
        let (_, co, ho, wo) = out.dims4()?;
        out.reshape([co, ho, wo])
    }

    /// Flow estimation on the 3-channel mosaic view, clamped to `max_flow`.
    pub fn estimate_flows(&self, burst: &Tensor, provider: &dyn FlowProvider) -> Result<Vec<FlowField>> {
        let rgb = self.to_rgb_for_flow(burst)?;
        let (n, _, _, _) = rgb.dims4()?;
        let frames = (0..n).map(|i| rgb.select(i)).collect::<Result<Vec<_>>>()?;
        let flows = provider.flows(&frames)?;
        Ok(flows.iter().map(|f| f.clamped(self.config.max_flow)).collect())
    }

    /// `[N,4,h,w]` packed burst → `[3,4·2h,4·2w]` RGB image.
    pub fn forward(&self, burst: &Tensor, provider: &dyn FlowProvider) -> Result<Tensor> {
        let flows = self.estimate_flows(burst, provider)?;
        self.forward_with_flows(burst, &flows)
    }

    pub fn forward_with_flows(&self, burst: &Tensor, flows: &[FlowField]) -> Result<Tensor> {
        let (_, h, w) = self.check_burst(burst)?;
        if (2 * h) % 4 != 0 || (2 * w) % 4 != 0 {
            return Err(Error::shape(
                "forward",
                format!("mosaic size {}x{} must be divisible by 4 for the flow pyramid", 2 * h, 2 * w),
            ));
        }
        let fd = self.encode(&self.shallow_extract(burst)?)?;
        let lifted = self.lift(&fd)?;
        let fa = self.align(&lifted, flows)?;
        let ff = self.fuse_decode(&fa)?;
        self.reconstruct(&ff, &lifted.select(0)?)?.finite_or("forward")
    }
}

/// Mean absolute difference.
pub fn l1_loss(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("l1_loss", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.numel() == 0 {
        return Err(Error::invalid("l1_loss", "empty tensors"));
    }
    let s: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum();
    Ok(s / a.numel() as f64)
}
