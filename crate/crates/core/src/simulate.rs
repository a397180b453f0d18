//! Synthetic RAW bursts with known ground truth.
//!
//! Each frame is the HR image moved by a small rigid transform, box
//! downsampled, Bayer-sampled (RGGB), packed into four half-resolution
//! channels, and corrupted by read plus shot noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticBurstSpec {
    pub n_frames: usize,
    /// Translation bound per axis, in mosaic pixels.
    pub max_shift_px: f64,
    pub max_rot_deg: f64,
    /// HR-to-mosaic scale factor `s`.
    pub downscale: usize,
    /// Standard deviation of the additive Gaussian read noise.
    pub read_noise: f64,
    /// Shot noise gain: the signal-dependent std is `shot_noise * sqrt(v)`.
    pub shot_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticBurstSpec {
    fn default() -> Self {
        Self {
            n_frames: 14,
            max_shift_px: 2.0,
            max_rot_deg: 1.0,
            downscale: 4,
            read_noise: 0.01,
            shot_noise: 0.02,
            seed: 0,
        }
    }
}

impl SyntheticBurstSpec {
    pub fn noiseless(mut self) -> Self {
        self.read_noise = 0.0;
        self.shot_noise = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::invalid("SyntheticBurstSpec", "n_frames must be >= 1"));
        }
        if self.downscale == 0 {
            return Err(Error::invalid("SyntheticBurstSpec", "downscale must be >= 1"));
        }
        for (name, v) in [
            ("max_shift_px", self.max_shift_px),
            ("max_rot_deg", self.max_rot_deg),
            ("read_noise", self.read_noise),
            ("shot_noise", self.shot_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("SyntheticBurstSpec", format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Content displacement of one frame relative to the reference: `dx`, `dy`
/// in mosaic pixels, rotation in degrees about the image center.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Transform {
    pub dx: f64,
    pub dy: f64,
    pub theta_deg: f64,
}

impl Transform {
    pub fn shift(dx: f64, dy: f64) -> Self {
        Self { dx, dy, theta_deg: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0 && self.theta_deg == 0.0
    }
}

/// Packed frames plus everything needed to regenerate them.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstStack {
    /// `[N, 4, h, w]`
    pub frames: Tensor,
    pub transforms: Vec<Transform>,
    /// Seed of each frame's noise stream.
    pub noise_seeds: Vec<u64>,
    pub spec: SyntheticBurstSpec,
}

impl BurstStack {
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

/// Stream 0 of the spec seed draws transforms; stream `i + 1` seeds frame `i`'s noise.
pub fn frame_noise_seed(seed: u64, frame: usize) -> u64 {
    SplitMix64::substream(seed, frame as u64 + 1).next_u64()
}

/// Frame 0 is the identity; the others are uniform within the spec bounds.
pub fn random_transforms(spec: &SyntheticBurstSpec, rng: &mut SplitMix64) -> Vec<Transform> {
    (0..spec.n_frames)
        .map(|i| {
            if i == 0 {
                return Transform::default();
            }
            let dx = rng.uniform(-spec.max_shift_px, spec.max_shift_px);
            let dy = rng.uniform(-spec.max_shift_px, spec.max_shift_px);
            let theta_deg = rng.uniform(-spec.max_rot_deg, spec.max_rot_deg);
            Transform { dx, dy, theta_deg }
        })
        .collect()
}

/// Moves HR content by `transform`: output `p` reads the input at
/// `R(-θ)(p - c) + c - s·t`, bilinear with clamp-to-edge.
pub fn transform_hr(hr: &Tensor, t: &Transform, scale: usize) -> Result<Tensor> {
    let (c, h, w) = hr.dims3()?;
    if t.is_identity() {
        return Ok(hr.clone());
    }
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = t.theta_deg.to_radians().sin_cos();
    let (tx, ty) = (scale as f64 * t.dx, scale as f64 * t.dy);
    let src = hr.data();
    let mut out = vec![0.0f32; c * h * w];
    out.par_chunks_mut(h * w).enumerate().for_each(|(ch, dst)| {
        let plane = &src[ch * h * w..][..h * w];
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 - cx, y as f64 - cy);
                let qx = cos * px + sin * py + cx - tx;
                let qy = -sin * px + cos * py + cy - ty;
                dst[y * w + x] = ops::sample_clamped(plane, h, w, qx, qy) as f32;
            }
        }
    });
    Tensor::new([c, h, w], out)
}

/// RGGB sampling of a `[3,H,W]` image: `[1,H,W]` mosaic.
pub fn bayer_mosaic(rgb: &Tensor) -> Result<Tensor> {
    let (c, h, w) = rgb.dims3()?;
    if c != 3 {
        return Err(Error::shape("bayer_mosaic", format!("expected 3 channels, got {c}")));
    }
    let d = rgb.data();
    Ok(Tensor::from_fn([1, h, w], |i| {
        let (y, x) = (i / w, i % w);
        let ch = match (y % 2, x % 2) {
            (0, 0) => 0,
            (1, 1) => 2,
            _ => 1,
        };
        d[ch * h * w + i]
    }))
}

/// `[1,H,W]` mosaic → `[4,H/2,W/2]` with channels R, G(0,1), G(1,0), B.
pub fn pack_rggb(mosaic: &Tensor) -> Result<Tensor> {
    let (_, h, w) = mosaic.dims3()?;
    let packed = ops::pixel_unshuffle(&mosaic.clone().reshape([1, 1, h, w])?, 2)?;
    packed.reshape([4, h / 2, w / 2])
}

/// `[4,h,w]` → `[1,2h,2w]`.
pub fn unpack_rggb(packed: &Tensor) -> Result<Tensor> {
    let (c, h, w) = packed.dims3()?;
    if c != 4 {
        return Err(Error::shape("unpack_rggb", format!("expected 4 channels, got {c}")));
    }
    ops::pixel_shuffle(&packed.clone().reshape([1, 4, h, w])?, 2)?.reshape([1, 2 * h, 2 * w])
}

/// One frame: transform, `s x s` box downsample, RGGB sampling, packing,
/// then `v + sqrt(read^2 + shot^2 v) n` noise (skipped when both are zero)
/// and clamping to `[0, 1]`.
pub fn degrade(hr: &Tensor, t: &Transform, spec: &SyntheticBurstSpec, rng: &mut SplitMix64) -> Result<Tensor> {
    let (c, h, w) = hr.dims3()?;
    let s = spec.downscale;
    if c != 3 {
        return Err(Error::shape("degrade", format!("HR image must have 3 channels, got {c}")));
    }
    if s == 0 || h % (2 * s) != 0 || w % (2 * s) != 0 || h == 0 || w == 0 {
        return Err(Error::shape(
            "degrade",
            format!("HR size {h}x{w} must be a non-zero multiple of 2*downscale = {}", 2 * s),
        ));
    }
    let moved = transform_hr(hr, t, s)?;
    let low = ops::avg_pool2d(&moved.reshape([1, 3, h, w])?, s, s)?.reshape([3, h / s, w / s])?;
    let mut packed = pack_rggb(&bayer_mosaic(&low)?)?;
    let (read2, shot2) = (spec.read_noise * spec.read_noise, spec.shot_noise * spec.shot_noise);
    if read2 > 0.0 || shot2 > 0.0 {
        for v in packed.data_mut() {
            let x = *v as f64;
            let sigma = (read2 + shot2 * x.max(0.0)).sqrt();
            *v = (x + sigma * rng.normal()) as f32;
        }
    }
    Ok(packed.map(|v| v.clamp(0.0, 1.0)))
}

/// Full burst with random transforms drawn from the spec seed.
pub fn generate_burst(hr: &Tensor, spec: &SyntheticBurstSpec) -> Result<BurstStack> {
    spec.validate()?;
    let transforms = random_transforms(spec, &mut SplitMix64::substream(spec.seed, 0));
    generate_burst_with(hr, spec, &transforms)
}

/// Burst with caller-chosen transforms (one per frame).
pub fn generate_burst_with(hr: &Tensor, spec: &SyntheticBurstSpec, transforms: &[Transform]) -> Result<BurstStack> {
    spec.validate()?;
    if transforms.len() != spec.n_frames {
        return Err(Error::invalid(
            "generate_burst",
            format!("{} transforms for {} frames", transforms.len(), spec.n_frames),
        ));
    }
    let noise_seeds: Vec<u64> = (0..spec.n_frames).map(|i| frame_noise_seed(spec.seed, i)).collect();
    let frames = transforms
        .par_iter()
        .zip(noise_seeds.par_iter())
        .map(|(t, &seed)| degrade(hr, t, spec, &mut SplitMix64::new(seed)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BurstStack {
        frames: Tensor::stack(&frames)?,
        transforms: transforms.to_vec(),
        noise_seeds,
        spec: spec.clone(),
    })
}

/// Bilinear demosaic of a packed frame by normalized convolution:
/// `[4,h,w] → [3,2h,2w]`. Known samples are returned unchanged.
pub fn demosaic_bilinear(packed: &Tensor) -> Result<Tensor> {
    let mosaic = unpack_rggb(packed)?;
    let (_, h, w) = mosaic.dims3()?;
    let m = mosaic.data();
    let cross = [[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]];
    let full = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];
    let has = |ch: usize, y: usize, x: usize| match ch {
        0 => y.is_multiple_of(2) && x.is_multiple_of(2),
        2 => y % 2 == 1 && x % 2 == 1,
        _ => (y + x) % 2 == 1,
    };
    let mut out = vec![0.0f32; 3 * h * w];
    for ch in 0..3 {
        let k = if ch == 1 { &cross } else { &full };
        for y in 0..h {
            for x in 0..w {
                let (mut num, mut den) = (0.0f64, 0.0f64);
                for (ky, row) in k.iter().enumerate() {
                    for (kx, &kv) in row.iter().enumerate() {
                        let (yy, xx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                        if kv == 0.0 || yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                            continue;
                        }
                        let (yy, xx) = (yy as usize, xx as usize);
                        if has(ch, yy, xx) {
                            num += kv * m[yy * w + xx] as f64;
                            den += kv;
                        }
                    }
                }
                out[(ch * h + y) * w + x] = (num / den) as f32;
            }
        }
    }
    Tensor::new([3, h, w], out)
}

/// Demosaic then bilinear upsample by `factor`: the baseline the
/// reconstruction is compared against.
pub fn baseline_upsample(packed: &Tensor, factor: usize) -> Result<Tensor> {
    let rgb = demosaic_bilinear(packed)?;
    let (c, h, w) = rgb.dims3()?;
    ops::upsample_bilinear(&rgb.reshape([1, c, h, w])?, factor)?.reshape([c, h * factor, w * factor])
}

/// Smooth random color image in `[0, 1]`: a few low-frequency sinusoids per
/// channel. `cycles` bounds the number of periods across the image.
pub fn smooth_image(channels: usize, h: usize, w: usize, cycles: f64, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    let tau = std::f64::consts::TAU;
    let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..channels)
        .map(|_| {
            (0..4)
                .map(|_| {
                    let fx = rng.uniform(-cycles, cycles) / w as f64;
                    let fy = rng.uniform(-cycles, cycles) / h as f64;
                    (fx, fy, rng.uniform(0.0, tau), rng.uniform(0.5, 1.0))
                })
                .collect()
        })
        .collect();
    Tensor::from_fn([channels, h, w], |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        let ws = &waves[ch];
        let total: f64 = ws.iter().map(|w| w.3).sum();
        let s: f64 = ws
            .iter()
            .map(|&(fx, fy, p, a)| a * (tau * (fx * x as f64 + fy * y as f64) + p).sin())
            .sum();
        (0.5 + 0.45 * s / total) as f32
    })
}

/// Gray (R = G = B) version of [`smooth_image`].
pub fn gray_texture(h: usize, w: usize, cycles: f64, seed: u64) -> Tensor {
    let g = smooth_image(1, h, w, cycles, seed);
    Tensor::concat0(&[&g, &g, &g]).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    fn clean(n: usize) -> SyntheticBurstSpec {
        SyntheticBurstSpec {
            n_frames: n,
            ..SyntheticBurstSpec::default()
        }
        .noiseless()
    }

    #[test]
    fn single_frame_transform_is_identity() {
        let spec = clean(1);
        assert_eq!(random_transforms(&spec, &mut SplitMix64::new(0)), vec![Transform::default()]);
    }

    #[test]
    fn transforms_stay_in_bounds() {
        let spec = SyntheticBurstSpec {
            n_frames: 1000,
            ..SyntheticBurstSpec::default()
        };
        let ts = random_transforms(&spec, &mut SplitMix64::new(3));
        assert!(ts[0].is_identity());
        for t in &ts[1..] {
            assert!(t.dx.abs() <= 2.0 && t.dy.abs() <= 2.0 && t.theta_deg.abs() <= 1.0);
        }
        // Roughly uniform: both halves of the range get used.
        assert!(ts.iter().filter(|t| t.dx > 1.0).count() > 150);
        assert!(ts.iter().filter(|t| t.dx < -1.0).count() > 150);
        assert_eq!(ts, random_transforms(&spec, &mut SplitMix64::new(3)));
    }

    #[test]
    fn constant_gray_packs_to_constant() {
        let hr = Tensor::full([3, 16, 16], 0.5);
        let f = degrade(&hr, &Transform::default(), &clean(1), &mut SplitMix64::new(0)).unwrap();
        assert_eq!(f.shape(), &[4, 2, 2]);
        assert!(f.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn primaries_land_in_their_channels() {
        for (color, want) in [(0, [1.0, 0.0, 0.0, 0.0]), (1, [0.0, 1.0, 1.0, 0.0]), (2, [0.0, 0.0, 0.0, 1.0])] {
            let hr = Tensor::from_fn([3, 16, 16], |i| if i / 256 == color { 1.0 } else { 0.0 });
            let f = degrade(&hr, &Transform::default(), &clean(1), &mut SplitMix64::new(0)).unwrap();
            for (ch, plane) in f.data().chunks(4).enumerate() {
                assert!(plane.iter().all(|&v| v == want[ch]));
            }
        }
    }

    #[test]
    fn divisibility_error() {
        let hr = Tensor::zeros([3, 12, 16]);
        assert!(degrade(&hr, &Transform::default(), &clean(1), &mut SplitMix64::new(0)).is_err());
    }

    #[test]
    fn integer_shift_moves_mosaic() {
        let hr = smooth_image(3, 64, 64, 3.0, 5);
        let spec = clean(2);
        let b = generate_burst_with(&hr, &spec, &[Transform::default(), Transform::shift(2.0, -2.0)]).unwrap();
        let m0 = unpack_rggb(&b.frames.select(0).unwrap()).unwrap();
        let m1 = unpack_rggb(&b.frames.select(1).unwrap()).unwrap();
        // frame1(x, y) = frame0(x - 2, y + 2) away from the clamped border.
        for y in 2..12 {
            for x in 4..14 {
                assert_eq!(m1.data()[y * 16 + x], m0.data()[(y + 2) * 16 + x - 2]);
            }
        }
    }

    #[test]
    fn burst_shapes_and_determinism() {
        let hr = smooth_image(3, 384, 384, 4.0, 1);
        let spec = SyntheticBurstSpec { seed: 9, ..SyntheticBurstSpec::default() };
        let a = generate_burst(&hr, &spec).unwrap();
        assert_eq!(a.frames.shape(), &[14, 4, 48, 48]);
        assert_eq!(a, generate_burst(&hr, &spec).unwrap());
        assert!(a.frames.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let still = generate_burst_with(&hr, &clean(3), &[Transform::default(); 3]).unwrap();
        let f0 = still.frames.select(0).unwrap();
        assert_eq!(still.frames.select(2).unwrap(), f0);
    }

    #[test]
    fn demosaic_keeps_known_samples() {
        let packed = SplitMix64::new(2).tensor_uniform([4, 5, 6], 0.0, 1.0);
        let rgb = demosaic_bilinear(&packed).unwrap();
        let m = unpack_rggb(&packed).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                let ch = match (y % 2, x % 2) {
                    (0, 0) => 0,
                    (1, 1) => 2,
                    _ => 1,
                };
                assert_eq!(rgb.data()[(ch * 10 + y) * 12 + x], m.data()[y * 12 + x]);
            }
        }
    }

    #[test]
    fn baseline_round_trip_on_smooth_image() {
        let hr = smooth_image(3, 128, 128, 2.0, 7);
        let f = degrade(&hr, &Transform::default(), &clean(1), &mut SplitMix64::new(0)).unwrap();
        let up = baseline_upsample(&f, 4).unwrap();
        let p = psnr(&up, &hr, 1.0).unwrap();
        assert!(p > 25.0, "psnr {p}");
    }
}
