//! Flow-guided, deformable feature alignment.
//!
//! Each frame's features are warped towards the reference with a coarse flow
//! field, then refined by a deformable convolution whose offsets are
//! predicted from the warped features, the reference features and the flow.
//! This runs on a three-level pyramid, coarse to fine.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ops::{self, Activation, LRELU_SLOPE};
use crate::params::{Conv, ParamSource};
use crate::tensor::Tensor;

pub const PYRAMID_LEVELS: usize = 3;
const TAPS: usize = 9;

/// Per-pixel displacement `[2, H, W]`: channel 0 is `dx`, channel 1 is `dy`.
///
/// Sampling `src` at `(x + dx, y + dy)` lands on the content the reference
/// shows at `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField(Tensor);

impl FlowField {
    pub fn new(t: Tensor) -> Result<Self> {
        let (two, _, _) = t.dims3()?;
        if two != 2 {
            return Err(Error::shape("FlowField", format!("expected [2,H,W], got {:?}", t.shape())));
        }
        Ok(Self(t.finite_or("FlowField")?))
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self(Tensor::zeros([2, h, w]))
    }

    pub fn constant(h: usize, w: usize, dx: f32, dy: f32) -> Self {
        Self(Tensor::from_fn([2, h, w], |i| if i < h * w { dx } else { dy }))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn dx(&self) -> &[f32] {
        &self.0.data()[..self.height() * self.width()]
    }

    pub fn dy(&self) -> &[f32] {
        &self.0.data()[self.height() * self.width()..]
    }

    /// Clamps each component to `[-max, max]`.
    pub fn clamped(&self, max: f32) -> Self {
        Self(self.0.map(|v| v.clamp(-max, max)))
    }

    pub fn max_abs(&self) -> f32 {
        self.0.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `warp(F, f)(x, y) = F(x + dx, y + dy)`, bilinear with clamp-to-edge.
pub fn warp(f: &Tensor, flow: &FlowField) -> Result<Tensor> {
    let (c, h, w) = f.dims3()?;
    if flow.height() != h || flow.width() != w {
        return Err(Error::shape(
            "warp",
            format!("flow {}x{} vs features {h}x{w}", flow.height(), flow.width()),
        ));
    }
    let (dx, dy) = (flow.dx(), flow.dy());
    let src = f.data();
    let mut out = vec![0.0f32; c * h * w];
    out.par_chunks_mut(h * w).enumerate().for_each(|(ch, dst)| {
        let plane = &src[ch * h * w..][..h * w];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                dst[i] = ops::sample_clamped(plane, h, w, x as f64 + dx[i] as f64, y as f64 + dy[i] as f64) as f32;
            }
        }
    });
    Tensor::new([c, h, w], out)
}

/// Integer-pixel flow by exhaustive block matching.
///
/// For each `block x block` tile of `reference` (edge tiles may be partial),
/// the displacement in `[-radius, radius]^2` that minimizes the sum of
/// absolute differences against `src` (clamp-to-edge sampling, summed over
/// channels) is assigned to every pixel of the tile. Ties go to the smallest
/// `dx^2 + dy^2`, then to the lexicographically smallest `(dy, dx)`.
pub fn block_matching_flow(reference: &Tensor, src: &Tensor, radius: usize, block: usize) -> Result<FlowField> {
    let (c, h, w) = reference.dims3()?;
    if src.shape() != reference.shape() {
        return Err(Error::shape(
            "block_matching_flow",
            format!("reference {:?} vs source {:?}", reference.shape(), src.shape()),
        ));
    }
    if block == 0 || block > h || block > w {
        return Err(Error::invalid(
            "block_matching_flow",
            format!("block {block} does not fit a {h}x{w} frame"),
        ));
    }
    let r = radius as isize;
    let mut candidates: Vec<(isize, isize)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dy, dx))).collect();
    candidates.sort_by_key(|&(dy, dx)| (dy * dy + dx * dx, dy, dx));

    let (bh, bw) = (h.div_ceil(block), w.div_ceil(block));
    let (rd, sd) = (reference.data(), src.data());
    let best: Vec<(isize, isize)> = (0..bh * bw)
        .into_par_iter()
        .map(|b| {
            let (y0, x0) = ((b / bw) * block, (b % bw) * block);
            let (y1, x1) = ((y0 + block).min(h), (x0 + block).min(w));
            let mut best = (f64::INFINITY, (0, 0));
            for &(dy, dx) in &candidates {
                let mut sad = 0.0f64;
                for ch in 0..c {
                    let rp = &rd[ch * h * w..][..h * w];
                    let sp = &sd[ch * h * w..][..h * w];
                    for y in y0..y1 {
                        let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        for x in x0..x1 {
                            let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                            sad += (rp[y * w + x] as f64 - sp[sy * w + sx] as f64).abs();
                        }
                    }
                    if sad >= best.0 {
                        break;
                    }
                }
                if sad < best.0 {
                    best = (sad, (dy, dx));
                }
            }
            best.1
        })
        .collect();
    let mut out = Tensor::zeros([2, h, w]);
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = best[(y / block) * bw + x / block];
            data[y * w + x] = dx as f32;
            data[h * w + y * w + x] = dy as f32;
        }
    }
    FlowField::new(out)
}

/// Flow at scales 1, 1/2, 1/4 with magnitudes halved per level.
#[derive(Debug, Clone)]
pub struct FlowPyramid {
    pub levels: Vec<FlowField>,
}

pub fn build_flow_pyramid(flow: &FlowField) -> Result<FlowPyramid> {
    let (h, w) = (flow.height(), flow.width());
    let div = 1 << (PYRAMID_LEVELS - 1);
    if h % div != 0 || w % div != 0 {
        return Err(Error::shape(
            "build_flow_pyramid",
            format!("{h}x{w} is not divisible by {div}"),
        ));
    }
    let mut levels = vec![flow.clone()];
    for _ in 1..PYRAMID_LEVELS {
        let prev = levels.last().unwrap().tensor();
        let (_, ph, pw) = prev.dims3()?;
        let pooled = ops::avg_pool2d(&prev.clone().reshape([1, 2, ph, pw])?, 2, 2)?;
        levels.push(FlowField::new(pooled.reshape([2, ph / 2, pw / 2])?.scale(0.5))?);
    }
    Ok(FlowPyramid { levels })
}

fn pool_chw(f: &Tensor) -> Result<Tensor> {
    let (c, h, w) = f.dims3()?;
    ops::avg_pool2d(&f.clone().reshape([1, c, h, w])?, 2, 2)?.reshape([c, h / 2, w / 2])
}

fn upsample_chw(f: &Tensor, scale: f32) -> Result<Tensor> {
    let (c, h, w) = f.dims3()?;
    let up = ops::upsample_bilinear(&f.clone().reshape([1, c, h, w])?, 2)?.reshape([c, 2 * h, 2 * w])?;
    Ok(if scale == 1.0 { up } else { up.scale(scale) })
}

/// Deformable 3x3 convolution (stride 1, padding 1, no modulation).
///
/// `offsets` is `[2*9*G, H, W]`; channel `2*(g*9 + tap)` holds the `x`
/// offset of kernel tap `tap` (row-major in the 3x3 kernel) for deformable
/// group `g`, the following channel holds `y`. Samples outside the map
/// read zero, so zero offsets reproduce [`ops::conv2d`] exactly.
pub fn deform_conv(
    f: &Tensor,
    offsets: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    groups: usize,
) -> Result<Tensor> {
    let (cin, h, w) = f.dims3()?;
    let (cout, wcin, kh, kw) = weight.dims4()?;
    if kh != 3 || kw != 3 || wcin != cin {
        return Err(Error::shape(
            "deform_conv",
            format!("weight {:?} for {cin} input channels", weight.shape()),
        ));
    }
    if groups == 0 || cin % groups != 0 {
        return Err(Error::invalid(
            "deform_conv",
            format!("{cin} channels not divisible by {groups} deformable groups"),
        ));
    }
    if offsets.shape() != [2 * TAPS * groups, h, w] {
        return Err(Error::shape(
            "deform_conv",
            format!("offsets {:?}, expected [{}, {h}, {w}]", offsets.shape(), 2 * TAPS * groups),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape("deform_conv", format!("bias {:?}", b.shape())));
        }
    }
    let hw = h * w;
    let cg = cin / groups;
    let (x, od) = (f.data(), offsets.data());

    // Sampled columns [cin * 9, hw].
    let mut cols = vec![0.0f32; cin * TAPS * hw];
    cols.par_chunks_mut(TAPS * hw).enumerate().for_each(|(ci, dst)| {
        let g = ci / cg;
        let plane = &x[ci * hw..][..hw];
        for tap in 0..TAPS {
            let ox = &od[2 * (g * TAPS + tap) * hw..][..hw];
            let oy = &od[(2 * (g * TAPS + tap) + 1) * hw..][..hw];
            let (ky, kx) = ((tap / 3) as f64 - 1.0, (tap % 3) as f64 - 1.0);
            let row = &mut dst[tap * hw..][..hw];
            for y in 0..h {
                for xx in 0..w {
                    let i = y * w + xx;
                    let sx = xx as f64 + kx + ox[i] as f64;
                    let sy = y as f64 + ky + oy[i] as f64;
                    row[i] = ops::sample_zero_pad(plane, h, w, sx, sy) as f32;
                }
            }
        }
    });

    let wd = weight.data();
    let mut out = vec![0.0f32; cout * hw];
    out.par_chunks_mut(hw).enumerate().for_each(|(co, dst)| {
        let b0 = bias.map_or(0.0, |b| b.data()[co] as f64);
        let mut acc = vec![b0; hw];
        for (k, &wv) in wd[co * cin * TAPS..][..cin * TAPS].iter().enumerate() {
            if wv == 0.0 {
                continue;
            }
            let wv = wv as f64;
            for (a, &c) in acc.iter_mut().zip(&cols[k * hw..][..hw]) {
                *a += wv * c as f64;
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a as f32;
        }
    });
    Tensor::new([cout, h, w], out)?.finite_or("deform_conv")
}

/// Offset predictor for one pyramid level.
#[derive(Debug, Clone)]
pub struct OffsetHead {
    pub conv1: Conv,
    /// Zero-initialized so untrained alignment starts from the flow alone.
    pub conv2: Conv,
}

impl OffsetHead {
    pub fn in_channels(c: usize, groups: usize) -> usize {
        2 * c + 2 + 2 * TAPS * groups
    }

    pub fn declare(src: &mut dyn ParamSource, prefix: &str, c: usize, groups: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv::declare(src, &format!("{prefix}.conv1"), Self::in_channels(c, groups), c, 3, 1)?,
            conv2: Conv::declare_zero(src, &format!("{prefix}.conv2"), c, 2 * TAPS * groups, 3)?,
        })
    }
}

/// `tanh(conv2(lrelu(conv1([Fw, Fref, f, O_prev])))) * max_offset`.
///
/// `prev` is the upsampled offset field of the coarser level, or zeros.
pub fn predict_offsets(
    fw: &Tensor,
    fref: &Tensor,
    flow: &FlowField,
    prev: Option<&Tensor>,
    head: &OffsetHead,
    max_offset: f32,
) -> Result<Tensor> {
    let (c, h, w) = fw.dims3()?;
    if fref.shape() != fw.shape() || flow.height() != h || flow.width() != w {
        return Err(Error::shape(
            "predict_offsets",
            format!("warped {:?}, reference {:?}, flow {:?}", fw.shape(), fref.shape(), flow.tensor().shape()),
        ));
    }
    let n_off = head.conv2.weight.shape()[0];
    let zeros;
    let prev = match prev {
        Some(p) => p,
        None => {
            zeros = Tensor::zeros([n_off, h, w]);
            &zeros
        }
    };
    if prev.shape() != [n_off, h, w] {
        return Err(Error::shape("predict_offsets", format!("previous offsets {:?}", prev.shape())));
    }
    let input = Tensor::concat0(&[fw, fref, flow.tensor(), prev])?;
    if input.shape()[0] != head.conv1.weight.shape()[1] {
        return Err(Error::shape(
            "predict_offsets",
            format!("{} input channels for a head expecting {}", input.shape()[0], head.conv1.weight.shape()[1]),
        ));
    }
    debug_assert_eq!(input.shape()[0], 2 * c + 2 + n_off);
    let hidden = ops::activation(&head.conv1.forward_chw(&input)?, Activation::LeakyRelu(LRELU_SLOPE));
    let raw = head.conv2.forward_chw(&hidden)?;
    Ok(raw.map(|v| v.tanh() * max_offset))
}

#[derive(Debug, Clone)]
pub struct AlignLevel {
    pub offsets: OffsetHead,
    pub dcn1: Conv,
    pub dcn2: Conv,
    /// 1x1 fusion of this level's output with the upsampled coarser one;
    /// absent on the coarsest level.
    pub fuse: Option<Conv>,
}

#[derive(Debug, Clone)]
pub struct AlignParams {
    /// Finest first.
    pub levels: Vec<AlignLevel>,
    pub groups: usize,
    pub max_offset: f32,
}

impl AlignParams {
    pub fn declare(src: &mut dyn ParamSource, prefix: &str, c: usize, groups: usize, max_offset: f32) -> Result<Self> {
        if groups == 0 || !c.is_multiple_of(groups) {
            return Err(Error::invalid(
                "AlignParams",
                format!("{c} channels not divisible by {groups} deformable groups"),
            ));
        }
        let levels = (0..PYRAMID_LEVELS)
            .map(|l| {
                let p = |n: &str| format!("{prefix}.l{l}.{n}");
                Ok(AlignLevel {
                    offsets: OffsetHead::declare(src, &p("offset"), c, groups)?,
                    dcn1: Conv::declare(src, &p("dcn1"), c, c, 3, 1)?,
                    dcn2: Conv::declare(src, &p("dcn2"), c, c, 3, 1)?,
                    fuse: if l + 1 < PYRAMID_LEVELS {
                        Some(Conv::declare(src, &p("fuse"), 2 * c, c, 1, 1)?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels, groups, max_offset })
    }
}

/// Output of one pyramid level: aligned features and the offsets used.
pub struct LevelOutput {
    pub aligned: Tensor,
    pub offsets: Tensor,
}

/// Warp, predict offsets, apply two deformable layers. `coarser` carries the
/// previous level's output at this level's resolution (already upsampled,
/// offsets already doubled).
pub fn align_level(
    fd: &Tensor,
    fref: &Tensor,
    flow: &FlowField,
    level: &AlignLevel,
    coarser: Option<&LevelOutput>,
    groups: usize,
    max_offset: f32,
) -> Result<LevelOutput> {
    let fw = warp(fd, flow)?;
    let offsets = predict_offsets(&fw, fref, flow, coarser.map(|c| &c.offsets), &level.offsets, max_offset)?;
    let a = deform_conv(&fw, &offsets, &level.dcn1.weight, Some(&level.dcn1.bias), groups)?;
    let a = ops::activation(&a, Activation::LeakyRelu(LRELU_SLOPE));
    let mut aligned = deform_conv(&a, &offsets, &level.dcn2.weight, Some(&level.dcn2.bias), groups)?;
    if let (Some(fuse), Some(c)) = (&level.fuse, coarser) {
        aligned = fuse.forward_chw(&Tensor::concat0(&[&aligned, &c.aligned])?)?;
    }
    Ok(LevelOutput { aligned, offsets })
}

/// Coarse-to-fine alignment of `fd` to `fref` (both `[C,H,W]`).
pub fn pyramid_align(fd: &Tensor, fref: &Tensor, pyramid: &FlowPyramid, params: &AlignParams) -> Result<Tensor> {
    if fd.shape() != fref.shape() {
        return Err(Error::shape(
            "pyramid_align",
            format!("features {:?} vs reference {:?}", fd.shape(), fref.shape()),
        ));
    }
    let n = params.levels.len();
    if pyramid.levels.len() != n {
        return Err(Error::shape(
            "pyramid_align",
            format!("{} flow levels for {n} alignment levels", pyramid.levels.len()),
        ));
    }
    let mut feats = vec![(fd.clone(), fref.clone())];
    for _ in 1..n {
        let (a, b) = feats.last().unwrap();
        feats.push((pool_chw(a)?, pool_chw(b)?));
    }
    let mut carry: Option<LevelOutput> = None;
    for l in (0..n).rev() {
        let (f, r) = &feats[l];
        let out = align_level(
            f,
            r,
            &pyramid.levels[l],
            &params.levels[l],
            carry.as_ref(),
            params.groups,
            params.max_offset,
        )?;
        carry = Some(if l == 0 {
            out
        } else {
            LevelOutput {
                aligned: upsample_chw(&out.aligned, 1.0)?,
                offsets: upsample_chw(&out.offsets, 2.0)?,
            }
        });
    }
    Ok(carry.unwrap().aligned)
}

/// Supplies one flow field per frame, mapping each frame onto frame 0.
pub trait FlowProvider: Send + Sync {
    fn name(&self) -> &'static str;
    /// `frames` are `[C,H,W]` images; `frames[0]` is the reference.
    fn flows(&self, frames: &[Tensor]) -> Result<Vec<FlowField>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFlow;

pub fn zero_flow(frames: &[Tensor]) -> Result<Vec<FlowField>> {
    frames
        .iter()
        .map(|f| {
            let (_, h, w) = f.dims3()?;
            Ok(FlowField::zeros(h, w))
        })
        .collect()
}

impl FlowProvider for ZeroFlow {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn flows(&self, frames: &[Tensor]) -> Result<Vec<FlowField>> {
        zero_flow(frames)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BlockMatching {
    pub radius: usize,
    pub block: usize,
}

impl Default for BlockMatching {
    fn default() -> Self {
        Self { radius: 4, block: 8 }
    }
}

impl FlowProvider for BlockMatching {
    fn name(&self) -> &'static str {
        "blockmatch"
    }

    fn flows(&self, frames: &[Tensor]) -> Result<Vec<FlowField>> {
        let reference = frames
            .first()
            .ok_or_else(|| Error::invalid("block_matching_flow", "no frames"))?;
        frames
            .par_iter()
            .map(|f| block_matching_flow(reference, f, self.radius, self.block))
            .collect()
    }
}

/// Flow fields loaded from disk, one per frame.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub fields: Vec<FlowField>,
}

impl FlowProvider for Precomputed {
    fn name(&self) -> &'static str {
        "file"
    }

    fn flows(&self, frames: &[Tensor]) -> Result<Vec<FlowField>> {
        if self.fields.len() != frames.len() {
            return Err(Error::invalid(
                "precomputed flow",
                format!("{} flow fields for {} frames", self.fields.len(), frames.len()),
            ));
        }
        for (i, (fl, fr)) in self.fields.iter().zip(frames).enumerate() {
            let (_, h, w) = fr.dims3()?;
            if fl.height() != h || fl.width() != w {
                return Err(Error::shape(
                    "precomputed flow",
                    format!("field {i} is {}x{}, frame is {h}x{w}", fl.height(), fl.width()),
                ));
            }
        }
        Ok(self.fields.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::params::InitSource;
    use crate::rng::SplitMix64;

    fn textured(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        // Smooth-ish texture: sum of a few random sinusoids.
        let mut rng = SplitMix64::new(seed);
        let waves: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| (rng.uniform(0.2, 1.3), rng.uniform(0.2, 1.3), rng.uniform(0.0, 6.3)))
            .collect();
        Tensor::from_fn([c, h, w], |i| {
            let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
            let s: f64 = waves
                .iter()
                .map(|&(a, b, p)| (a * x as f64 + b * y as f64 + p + ch as f64).sin())
                .sum();
            (0.5 + s / 12.0) as f32
        })
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let f = SplitMix64::new(1).tensor_uniform([3, 7, 9], -1.0, 1.0);
        assert_eq!(warp(&f, &FlowField::zeros(7, 9)).unwrap(), f);
    }

    #[test]
    fn integer_and_half_flow() {
        let f = Tensor::from_fn([1, 4, 6], |i| (i % 6) as f32 * 10.0);
        let one = warp(&f, &FlowField::constant(4, 6, 1.0, 0.0)).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(one.data()[y * 6 + x], f.data()[y * 6 + x + 1]);
            }
            assert_eq!(one.data()[y * 6 + 5], 50.0);
        }
        let half = warp(&f, &FlowField::constant(4, 6, 0.5, 0.0)).unwrap();
        assert_eq!(half.data()[2], 25.0);
    }

    #[test]
    fn warp_matches_oracle() {
        let mut rng = SplitMix64::new(2);
        let f = rng.tensor_uniform([2, 6, 8], -1.0, 1.0);
        let flow = FlowField::new(rng.tensor_uniform([2, 6, 8], -3.0, 3.0)).unwrap();
        let got = warp(&f, &flow).unwrap();
        assert!(got.max_abs_diff(&oracle::warp(&f, flow.tensor())).unwrap() < 1e-6);
    }

    #[test]
    fn block_matching_basics() {
        let f = textured(1, 32, 32, 3);
        let z = block_matching_flow(&f, &f, 3, 8).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let shifted = Tensor::from_fn([1, 32, 32], |i| {
            let (y, x) = (i / 32, i % 32);
            f.data()[y * 32 + (x + 2).min(31)]
        });
        let r0 = block_matching_flow(&f, &shifted, 0, 8).unwrap();
        assert_eq!(r0.max_abs(), 0.0);
        // src(x) = ref(x + 2) so ref(x) = src(x - 2).
        let fl = block_matching_flow(&f, &shifted, 3, 8).unwrap();
        for y in 8..24 {
            for x in 8..24 {
                assert_eq!(fl.dx()[y * 32 + x], -2.0);
                assert_eq!(fl.dy()[y * 32 + x], 0.0);
            }
        }
        assert!(block_matching_flow(&f, &f, 1, 33).is_err());
        // Partial tiles are fine.
        assert_eq!(block_matching_flow(&f, &f, 1, 10).unwrap().height(), 32);
    }

    #[test]
    fn block_matching_prefers_small_displacement_on_flat_input() {
        let f = Tensor::full([1, 8, 8], 0.5);
        assert_eq!(block_matching_flow(&f, &f, 2, 4).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn pyramid_of_constant_flow() {
        let p = build_flow_pyramid(&FlowField::constant(8, 12, 4.0, 2.0)).unwrap();
        let want = [(4.0, 2.0), (2.0, 1.0), (1.0, 0.5)];
        for (l, (dx, dy)) in p.levels.iter().zip(want) {
            assert!(l.dx().iter().all(|&v| v == dx));
            assert!(l.dy().iter().all(|&v| v == dy));
        }
        assert_eq!(p.levels[2].height(), 2);
        assert!(build_flow_pyramid(&FlowField::zeros(6, 8)).is_err());
    }

    #[test]
    fn pyramid_matches_pool_then_scale() {
        let flow = FlowField::new(SplitMix64::new(4).tensor_uniform([2, 8, 8], -4.0, 4.0)).unwrap();
        let p = build_flow_pyramid(&flow).unwrap();
        let l1 = oracle::avg_pool2d(&flow.tensor().clone().reshape([1, 2, 8, 8]).unwrap(), 2, 2).scale(0.5);
        assert!(p.levels[1].tensor().max_abs_diff(&l1.reshape([2, 4, 4]).unwrap()).unwrap() < 1e-6);
    }

    #[test]
    fn deform_zero_offsets_equal_conv() {
        let mut rng = SplitMix64::new(5);
        let f = rng.tensor_uniform([4, 6, 7], -1.0, 1.0);
        let w = rng.tensor_uniform([3, 4, 3, 3], -1.0, 1.0);
        let b = rng.tensor_uniform([3], -1.0, 1.0);
        let got = deform_conv(&f, &Tensor::zeros([36, 6, 7]), &w, Some(&b), 2).unwrap();
        let want = ops::conv2d_chw(&f, &w, Some(&b), ops::Conv2dParams::same(3)).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-5);
        assert!(deform_conv(&f, &Tensor::zeros([54, 6, 7]), &w, None, 3).is_err());
    }

    #[test]
    fn deform_integer_offset_is_shift() {
        let mut rng = SplitMix64::new(6);
        let f = rng.tensor_uniform([2, 8, 8], -1.0, 1.0);
        let w = rng.tensor_uniform([2, 2, 3, 3], -1.0, 1.0);
        let off = Tensor::from_fn([18, 8, 8], |i| if (i / 64) % 2 == 0 { 1.0 } else { 0.0 });
        let got = deform_conv(&f, &off, &w, None, 1).unwrap();
        let shifted = Tensor::from_fn([2, 8, 8], |i| {
            let x = i % 8;
            if x + 1 < 8 { f.data()[i + 1] } else { 0.0 }
        });
        let want = ops::conv2d_chw(&shifted, &w, None, ops::Conv2dParams::same(3)).unwrap();
        for c in 0..2 {
            for y in 0..8 {
                for x in 1..8 {
                    let i = c * 64 + y * 8 + x;
                    assert!((got.data()[i] - want.data()[i]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn deform_matches_oracle() {
        let mut rng = SplitMix64::new(7);
        let f = rng.tensor_uniform([4, 5, 6], -1.0, 1.0);
        let w = rng.tensor_uniform([3, 4, 3, 3], -1.0, 1.0);
        let off = rng.tensor_uniform([36, 5, 6], -2.5, 2.5);
        let got = deform_conv(&f, &off, &w, None, 2).unwrap();
        assert!(got.max_abs_diff(&oracle::deform_conv(&f, &off, &w, None, 2)).unwrap() < 1e-5);
    }

    #[test]
    fn offsets_zero_head_and_bounded() {
        let mut rng = SplitMix64::new(8);
        let (c, g) = (8, 4);
        let head = OffsetHead::declare(&mut InitSource::random(9), "o", c, g).unwrap();
        let fw = rng.tensor_uniform([c, 6, 6], -1.0, 1.0);
        let fr = rng.tensor_uniform([c, 6, 6], -1.0, 1.0);
        let flow = FlowField::constant(6, 6, 1.0, -1.0);
        let o = predict_offsets(&fw, &fr, &flow, None, &head, 4.0).unwrap();
        assert_eq!(o.shape(), &[72, 6, 6]);
        assert!(o.data().iter().all(|&v| v == 0.0));

        let mut head = head;
        head.conv2.weight = rng.tensor_uniform(head.conv2.weight.shape().to_vec(), -30.0, 30.0);
        let o = predict_offsets(&fw, &fr, &flow, None, &head, 4.0).unwrap();
        assert!(o.data().iter().all(|v| v.abs() <= 4.0));
        assert!(o.data().iter().any(|v| v.abs() > 1.0));
    }

    fn params(c: usize, seed: u64) -> AlignParams {
        AlignParams::declare(&mut InitSource::random(seed), "align", c, 2, 4.0).unwrap()
    }

    /// Fusion that keeps the current level and discards the coarser one.
    fn pass_through_fuse(p: &mut AlignParams, c: usize) {
        for l in &mut p.levels {
            if let Some(f) = &mut l.fuse {
                f.weight = Tensor::from_fn([c, 2 * c, 1, 1], |i| if i % (2 * c) == i / (2 * c) { 1.0 } else { 0.0 });
                f.bias = Tensor::zeros([c]);
            }
        }
    }

    #[test]
    fn zero_flow_zero_offsets_is_plain_convolution() {
        let c = 4;
        let mut p = params(c, 10);
        pass_through_fuse(&mut p, c);
        let mut rng = SplitMix64::new(11);
        let fd = rng.tensor_uniform([c, 8, 8], -1.0, 1.0);
        let fr = rng.tensor_uniform([c, 8, 8], -1.0, 1.0);
        let pyr = build_flow_pyramid(&FlowField::zeros(8, 8)).unwrap();
        let got = pyramid_align(&fd, &fr, &pyr, &p).unwrap();
        let l = &p.levels[0];
        let sm = ops::Conv2dParams::same(3);
        let a = ops::conv2d_chw(&fd, &l.dcn1.weight, Some(&l.dcn1.bias), sm).unwrap();
        let a = ops::activation(&a, Activation::LeakyRelu(LRELU_SLOPE));
        let want = ops::conv2d_chw(&a, &l.dcn2.weight, Some(&l.dcn2.bias), sm).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-5);
        assert_eq!(got.shape(), &[c, 8, 8]);
    }

    #[test]
    fn pyramid_consistent_with_single_level() {
        let c = 4;
        let mut p = params(c, 12);
        pass_through_fuse(&mut p, c);
        let mut rng = SplitMix64::new(13);
        let fd = rng.tensor_uniform([c, 8, 8], -1.0, 1.0);
        let fr = rng.tensor_uniform([c, 8, 8], -1.0, 1.0);
        let flow = FlowField::constant(8, 8, 1.5, -0.5);
        let pyr = FlowPyramid {
            levels: vec![flow.clone(), FlowField::constant(4, 4, 1.5, -0.5), FlowField::constant(2, 2, 1.5, -0.5)],
        };
        let full = pyramid_align(&fd, &fr, &pyr, &p).unwrap();
        let single = align_level(&fd, &fr, &flow, &p.levels[0], None, p.groups, p.max_offset).unwrap();
        assert!(full.max_abs_diff(&single.aligned).unwrap() < 1e-4);
    }
}
