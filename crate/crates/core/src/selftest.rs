//! Oracle and degeneracy suites run by `burstforge selftest` and the
//! acceptance harness.
//!
//! Each check draws random small instances, evaluates the library kernel and
//! its reference, and records the largest elementwise difference. A check
//! passes when that difference is within its tolerance (zero for checks that
//! must be bit-exact).

use std::collections::BTreeMap;

use crate::align::{self, FlowField};
use crate::attention::{self, CfaParams, CwaWeights, McaWeights, RelPosBias, WindowSpec};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{Checkpoint, Model, ModelConfig};
use crate::ops::{self, Conv2dParams};
use crate::oracle;
use crate::params::InitSource;
use crate::rng::SplitMix64;
use crate::simulate;
use crate::ssm::{self, DecoderParams, RmbParams, SsmParams};
use crate::tensor::Tensor;

/// Names accepted by [`SuiteOptions::perturb`].
pub const KERNELS: &[&str] = &[
    "conv2d",
    "linear",
    "layer_norm",
    "softmax",
    "avg_pool2d",
    "pixel_shuffle",
    "bilinear_sample",
    "window_partition",
    "window_attention",
    "selective_scan",
    "scan_convolution_form",
    "warp",
    "deform_conv",
];

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub instances: usize,
    pub seed: u64,
    /// Adds `1e-3` to the first output element of the named kernel before
    /// it is compared, to prove that the harness notices.
    pub perturb: Option<String>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            instances: 100,
            seed: 0,
            perturb: None,
        }
    }
}

impl SuiteOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.perturb {
            if !KERNELS.contains(&p.as_str()) {
                return Err(Error::invalid(
                    "selftest",
                    format!("unknown kernel `{p}`; expected one of {}", KERNELS.join(", ")),
                ));
            }
        }
        if self.instances == 0 {
            return Err(Error::invalid("selftest", "instances must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub group: &'static str,
    pub name: &'static str,
    pub instances: usize,
    pub max_err: f64,
    pub tol: f64,
    pub passed: bool,
}

struct Runner<'a> {
    opts: &'a SuiteOptions,
    checks: Vec<Check>,
}

impl Runner<'_> {
    /// Runs `count` instances of `f`, which returns `(library, reference)`.
    fn compare(
        &mut self,
        group: &'static str,
        name: &'static str,
        tol: f64,
        count: usize,
        mut f: impl FnMut(&mut SplitMix64) -> Result<(Tensor, Tensor)>,
    ) -> Result<()> {
        let mut rng = SplitMix64::substream(self.opts.seed, fnv(name));
        let mut max_err = 0.0f64;
        let mut ok = true;
        for _ in 0..count {
            let (mut got, want) = f(&mut rng)?;
            if self.opts.perturb.as_deref() == Some(name) && got.numel() > 0 {
                got.data_mut()[0] += 1e-3;
            }
            if got.shape() != want.shape() {
                ok = false;
                max_err = f64::INFINITY;
                continue;
            }
            for (&a, &b) in got.data().iter().zip(want.data()) {
                let d = (a as f64 - b as f64).abs();
                if d.is_nan() {
                    ok = false;
                    max_err = f64::INFINITY;
                } else {
                    max_err = max_err.max(d);
                }
            }
        }
        self.checks.push(Check {
            group,
            name,
            instances: count,
            max_err,
            tol,
            passed: ok && max_err <= tol,
        });
        Ok(())
    }

    fn assert(&mut self, group: &'static str, name: &'static str, err: f64, tol: f64) {
        self.checks.push(Check {
            group,
            name,
            instances: 1,
            max_err: err,
            tol,
            passed: err <= tol,
        });
    }
}

fn fnv(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn pick(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

fn uni(rng: &mut SplitMix64, shape: impl Into<Vec<usize>>) -> Tensor {
    rng.tensor_uniform(shape, -1.0, 1.0)
}

fn random_ssm(rng: &mut SplitMix64, inner: usize, ds: usize) -> Result<SsmParams> {
    let mut p = SsmParams::declare(&mut InitSource::random(rng.next_u64()), "s", inner, ds)?;
    p.bias_b = rng.tensor_uniform([ds], -0.5, 0.5);
    p.bias_c = rng.tensor_uniform([ds], -0.5, 0.5);
    p.skip_d = uni(rng, [inner]);
    p.delta_bias = rng.tensor_uniform([inner], -3.0, 0.5);
    Ok(p)
}

fn random_bias(rng: &mut SplitMix64, spec: &WindowSpec) -> Result<RelPosBias> {
    let span = RelPosBias::span(spec);
    RelPosBias::new(uni(rng, [spec.heads, span * span]), spec)
}

/// Every tensor-core, attention, scan and alignment kernel against its
/// brute-force reference.
pub fn kernel_oracle_suite(opts: &SuiteOptions) -> Result<Vec<Check>> {
    opts.validate()?;
    let mut r = Runner { opts, checks: Vec::new() };
    let n = opts.instances;

    r.compare("tensor", "conv2d", 1e-5, n, |rng| {
        let g = pick(rng, 1, 2);
        let (cin, cout) = (g * pick(rng, 1, 3), g * pick(rng, 1, 3));
        let k = [1, 3, 5][pick(rng, 0, 2)];
        let stride = pick(rng, 1, 2);
        let pad = pick(rng, 0, k / 2);
        let (h, w) = (pick(rng, k, k + 6), pick(rng, k, k + 6));
        let dims = [pick(rng, 1, 2), cin, h, w];
        let x = uni(rng, dims);
        let wt = uni(rng, [cout, cin / g, k, k]);
        let b = uni(rng, [cout]);
        let p = Conv2dParams { stride, padding: pad, groups: g };
        Ok((ops::conv2d(&x, &wt, Some(&b), p)?, oracle::conv2d(&x, &wt, Some(&b), stride, pad, g)))
    })?;
    r.compare("tensor", "linear", 1e-5, n, |rng| {
        let (rows, din, dout) = (pick(rng, 1, 6), pick(rng, 1, 9), pick(rng, 1, 9));
        let x = uni(rng, [rows, din]);
        let w = uni(rng, [dout, din]);
        let b = uni(rng, [dout]);
        let bias = (rng.next_u64() % 2 == 0).then_some(&b);
        Ok((ops::linear(&x, &w, bias)?, oracle::linear(&x, &w, bias)))
    })?;
    r.compare("tensor", "layer_norm", 1e-5, n, |rng| {
        let (rows, d) = (pick(rng, 1, 6), pick(rng, 2, 12));
        let x = rng.tensor_uniform([rows, d], -3.0, 3.0);
        let (g, b) = (uni(rng, [d]), uni(rng, [d]));
        Ok((
            ops::layer_norm(&x, &g, &b, ops::LAYER_NORM_EPS)?,
            oracle::layer_norm(&x, &g, &b, ops::LAYER_NORM_EPS),
        ))
    })?;
    r.compare("tensor", "softmax", 1e-5, n, |rng| {
        let dims = [pick(rng, 1, 5), pick(rng, 1, 12)];
        let x = rng.tensor_uniform(dims, -6.0, 6.0);
        Ok((ops::softmax_lastdim(&x)?, oracle::softmax_lastdim(&x)))
    })?;
    r.compare("tensor", "avg_pool2d", 1e-5, n, |rng| {
        let k = pick(rng, 1, 3);
        let stride = pick(rng, 1, k);
        let (mut h, mut w) = (pick(rng, k, k + 6), pick(rng, k, k + 6));
        if stride == k {
            h = h / k * k;
            w = w / k * k;
        }
        let dims = [pick(rng, 1, 2), pick(rng, 1, 3), h, w];
        let x = uni(rng, dims);
        Ok((ops::avg_pool2d(&x, k, stride)?, oracle::avg_pool2d(&x, k, stride)))
    })?;
    r.compare("tensor", "pixel_shuffle", 0.0, n, |rng| {
        let u = pick(rng, 1, 3);
        let dims = [pick(rng, 1, 2), pick(rng, 1, 3) * u * u, pick(rng, 1, 5), pick(rng, 1, 5)];
        let x = uni(rng, dims);
        Ok((ops::pixel_shuffle(&x, u)?, oracle::pixel_shuffle(&x, u)))
    })?;
    r.compare("tensor", "bilinear_sample", 1e-5, n, |rng| {
        let (b, c, h, w) = (pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 7), pick(rng, 1, 7));
        let (ho, wo) = (pick(rng, 1, 6), pick(rng, 1, 6));
        let x = uni(rng, [b, c, h, w]);
        let coords = Tensor::from_fn([b, 2, ho, wo], |i| {
            let lim = if (i / (ho * wo)) % 2 == 0 { w } else { h };
            rng.uniform(-2.0, lim as f64 + 1.0) as f32
        });
        Ok((ops::bilinear_sample(&x, &coords)?, oracle::bilinear_sample(&x, &coords)))
    })?;

    r.compare("attention", "window_partition", 0.0, n, |rng| {
        let p = pick(rng, 1, 4);
        let spec = WindowSpec::new(p, [0.0, 0.5, 1.0][pick(rng, 0, 2)], 1)?;
        let dims = [pick(rng, 1, 2), pick(rng, 1, 3), p * pick(rng, 1, 3), p * pick(rng, 1, 3)];
        let f = uni(rng, dims);
        let q = attention::partition_q_windows(&f, &spec)?;
        let kv = attention::extract_kv_windows(&f, &spec)?;
        let oq = oracle::window_tokens(&f, p, p, 0);
        let okv = oracle::window_tokens(&f, p, spec.kv_window, spec.margin());
        let flat = |t: &Tensor| t.clone().reshape([t.numel()]);
        Ok((
            Tensor::concat0(&[&flat(&q)?, &flat(&kv)?])?,
            Tensor::concat0(&[&flat(&oq)?, &flat(&okv)?])?,
        ))
    })?;
    r.compare("attention", "window_attention", 1e-5, n, |rng| {
        let heads = pick(rng, 1, 2);
        let c = heads * pick(rng, 1, 4);
        let spec = WindowSpec::new(pick(rng, 1, 3), [0.0, 0.5, 1.0][pick(rng, 0, 2)], heads)?;
        let tw = pick(rng, 1, 3);
        let (nq, nk) = (spec.window * spec.window, spec.kv_window * spec.kv_window);
        let bias = random_bias(rng, &spec)?;
        let q = rng.tensor_uniform([tw, nq, c], -2.0, 2.0);
        let k = rng.tensor_uniform([tw, nk, c], -2.0, 2.0);
        let v = uni(rng, [tw, nk, c]);
        Ok((
            attention::window_attention(&q, &k, &v, &bias, heads)?,
            oracle::window_attention(&q, &k, &v, &bias, heads),
        ))
    })?;

    r.compare("scan", "selective_scan", 1e-5, n, |rng| {
        let (l, d, ds) = (pick(rng, 1, 12), pick(rng, 1, 5), pick(rng, 1, 5));
        let p = random_ssm(rng, d, ds)?;
        let x = uni(rng, [l, d]);
        Ok((ssm::selective_scan_1d(&x, &p)?, oracle::selective_scan(&x, &p)))
    })?;
    r.compare("scan", "scan_convolution_form", 1e-4, n, |rng| {
        let (l, d, ds) = (pick(rng, 1, 16), pick(rng, 1, 5), pick(rng, 1, 6));
        let mut p = random_ssm(rng, d, ds)?;
        for w in [&mut p.proj_delta, &mut p.proj_b, &mut p.proj_c] {
            *w = Tensor::zeros(w.shape().to_vec());
        }
        let x = uni(rng, [l, d]);
        Ok((ssm::selective_scan_1d(&x, &p)?, oracle::scan_convolution_form(&x, &p)))
    })?;

    r.compare("align", "warp", 1e-5, n, |rng| {
        let (c, h, w) = (pick(rng, 1, 3), pick(rng, 1, 8), pick(rng, 1, 8));
        let f = uni(rng, [c, h, w]);
        let flow = rng.tensor_uniform([2, h, w], -3.0, 3.0);
        Ok((align::warp(&f, &FlowField::new(flow.clone())?)?, oracle::warp(&f, &flow)))
    })?;
    r.compare("align", "deform_conv", 1e-5, n, |rng| {
        let g = pick(rng, 1, 2);
        let cin = g * pick(rng, 1, 2);
        let (cout, h, w) = (pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6));
        let f = uni(rng, [cin, h, w]);
        let off = rng.tensor_uniform([18 * g, h, w], -2.5, 2.5);
        let wt = uni(rng, [cout, cin, 3, 3]);
        let b = uni(rng, [cout]);
        Ok((
            align::deform_conv(&f, &off, &wt, Some(&b), g)?,
            oracle::deform_conv(&f, &off, &wt, Some(&b), g),
        ))
    })?;
    Ok(r.checks)
}

/// Degenerate settings under which blocks reduce to simpler operations.
pub fn degeneracy_suite(opts: &SuiteOptions) -> Result<Vec<Check>> {
    opts.validate()?;
    let mut r = Runner { opts, checks: Vec::new() };
    let n = opts.instances.min(20);

    // r = 0: K/V windows coincide with the query windows, so cross-window
    // attention is plain window attention on the same projections.
    r.compare("degeneracy", "overlap_zero_is_window_attention", 0.0, n, |rng| {
        let heads = pick(rng, 1, 2);
        let c = heads * pick(rng, 1, 3);
        let p = pick(rng, 2, 4);
        let spec = WindowSpec::new(p, 0.0, heads)?;
        let (b, h, w) = (pick(rng, 1, 2), p * pick(rng, 1, 2), p * pick(rng, 1, 3));
        let mut wts = CwaWeights::declare(&mut InitSource::random(rng.next_u64()), "cwa", c, &spec)?;
        wts.rel_bias = random_bias(rng, &spec)?;
        let f = uni(rng, [b, c, h, w]);
        let got = attention::cwa_block(&f, &wts, &spec)?;
        let q = oracle::window_tokens(&wts.to_q.forward(&f)?, p, p, 0);
        let k = oracle::window_tokens(&wts.to_k.forward(&f)?, p, p, 0);
        let v = oracle::window_tokens(&wts.to_v.forward(&f)?, p, p, 0);
        let attn = attention::window_attention(&q, &k, &v, &wts.rel_bias, heads)?;
        let want = attention::merge_q_windows(&wts.proj.forward(&attn)?, b, h, w, &spec)?;
        Ok((got, want))
    })?;
    r.compare("degeneracy", "zero_offset_dcn_is_conv", 1e-5, n, |rng| {
        let g = pick(rng, 1, 2);
        let cin = g * pick(rng, 1, 3);
        let (cout, h, w) = (pick(rng, 1, 3), pick(rng, 1, 7), pick(rng, 1, 7));
        let f = uni(rng, [cin, h, w]);
        let wt = uni(rng, [cout, cin, 3, 3]);
        let b = uni(rng, [cout]);
        Ok((
            align::deform_conv(&f, &Tensor::zeros([18 * g, h, w]), &wt, Some(&b), g)?,
            ops::conv2d_chw(&f, &wt, Some(&b), Conv2dParams::same(3))?,
        ))
    })?;
    r.compare("degeneracy", "zero_flow_warp_is_identity", 0.0, n, |rng| {
        let (c, h, w) = (pick(rng, 1, 3), pick(rng, 1, 9), pick(rng, 1, 9));
        let f = uni(rng, [c, h, w]);
        Ok((align::warp(&f, &FlowField::zeros(h, w))?, f))
    })?;
    r.compare("degeneracy", "vanishing_step_scan_is_skip", 1e-6, n, |rng| {
        let (l, d, ds) = (pick(rng, 1, 12), pick(rng, 1, 5), pick(rng, 1, 5));
        let mut p = random_ssm(rng, d, ds)?;
        p.delta_bias = Tensor::full([d], -30.0);
        let x = uni(rng, [l, d]);
        let want = Tensor::from_fn([l, d], |i| p.skip_d.data()[i % d] * x.data()[i]);
        Ok((ssm::selective_scan_1d(&x, &p)?, want))
    })?;
    r.compare("degeneracy", "zero_weight_mca", 1e-5, n, |rng| {
        let heads = pick(rng, 1, 2);
        let frames = pick(rng, 1, 3);
        let c = 4 * heads;
        let spec = WindowSpec::new(2, 0.5, heads)?;
        let w = McaWeights::declare(&mut InitSource::zeroed(), "m", frames, c, &spec, 2)?;
        let alpha = rng.uniform(0.0, 2.0) as f32;
        let (h, wd) = (2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3));
        let f = uni(rng, [frames, c, h, wd]);
        let got = attention::mca_encoder_block(&f, &w, &spec, alpha)?;
        let ln = oracle::layer_norm(&f.nchw_to_tokens()?, &Tensor::full([c], 1.0), &Tensor::zeros([c]), ops::LAYER_NORM_EPS)
            .tokens_to_nchw(frames, c, h, wd)?;
        Ok((got, f.add(&ln.scale(alpha / 2.0))?))
    })?;
    r.compare("degeneracy", "zero_weight_cfa_halves", 0.0, n, |rng| {
        let c = 4 * pick(rng, 1, 3);
        let p = CfaParams::declare(&mut InitSource::zeroed(), "cfa", c, 4)?;
        let dims = [1, c, pick(rng, 1, 6), pick(rng, 1, 6)];
        let f = uni(rng, dims);
        Ok((attention::cfa_block(&f, &p)?, f.scale(0.5)))
    })?;
    r.compare("degeneracy", "zero_weight_rmb_is_zero", 0.0, n, |rng| {
        let c = 2 * pick(rng, 1, 3);
        let p = RmbParams::declare(&mut InitSource::zeroed(), "rmb", c, 2, 3, 2)?;
        let dims = [c, pick(rng, 1, 6), pick(rng, 1, 6)];
        let f = uni(rng, dims);
        Ok((ssm::rmb_block(&f, &p)?, Tensor::zeros(f.shape().to_vec())))
    })?;
    r.compare("degeneracy", "zero_weight_decoder_is_identity", 0.0, n, |rng| {
        let c = 4 * pick(rng, 1, 2);
        let p = DecoderParams::declare(&mut InitSource::zeroed(), "d", c, 2, 3, 2, 4)?;
        let dims = [c, pick(rng, 1, 6), pick(rng, 1, 6)];
        let f = uni(rng, dims);
        Ok((ssm::decoder_block(&f, &p)?, f))
    })?;
    Ok(r.checks)
}

/// Smaller end-to-end checks of the metrics, simulator, formats and model.
pub fn module_suite(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut r = Runner { opts, checks: Vec::new() };
    let mut rng = SplitMix64::substream(opts.seed, 7);

    let a = Tensor::full([4, 4], 100.0);
    let p = metrics::psnr(&a, &a.map(|v| v + 1.0), 255.0)?;
    r.assert("metrics", "psnr_unit_mse", (p - 48.1308).abs(), 1e-3);
    let img = uni(&mut rng, [3, 16, 16]).map(|v| 0.5 + 0.5 * v);
    r.assert("metrics", "ssim_identity", (metrics::ssim(&img, &img)? - 1.0).abs(), 0.0);

    let hr = simulate::smooth_image(3, 64, 64, 3.0, opts.seed);
    let spec = simulate::SyntheticBurstSpec {
        n_frames: 3,
        seed: opts.seed,
        ..Default::default()
    };
    let b1 = simulate::generate_burst(&hr, &spec)?;
    let b2 = simulate::generate_burst(&hr, &spec)?;
    r.assert("simulate", "burst_determinism", b1.frames.max_abs_diff(&b2.frames)? as f64, 0.0);
    let still = simulate::degrade(
        &Tensor::full([3, 8, 8], 0.25),
        &simulate::Transform::default(),
        &spec.clone().noiseless(),
        &mut rng,
    )?;
    r.assert("simulate", "constant_packs_constant", still.data().iter().map(|v| (v - 0.25).abs() as f64).fold(0.0, f64::max), 0.0);

    let t = uni(&mut rng, [2, 3, 5]);
    let back = crate::io::decode_tensor(&crate::io::encode_tensor(&t))?;
    r.assert("io", "bft1_round_trip", t.max_abs_diff(&back)? as f64, 0.0);
    let mut tensors = BTreeMap::new();
    tensors.insert("t".to_string(), t);
    let ck = Checkpoint { config: ModelConfig::default(), tensors };
    let bytes = crate::io::encode_checkpoint(&ck);
    let again = crate::io::encode_checkpoint(&crate::io::decode_checkpoint(&bytes)?);
    r.assert("io", "bfck_round_trip", if again == bytes { 0.0 } else { 1.0 }, 0.0);

    let cfg = ModelConfig {
        n_frames: 2,
        enc_channels: 12,
        fused_channels: 8,
        n_encoders: 1,
        n_decoders: 1,
        window: 4,
        heads: 2,
        beta: 2,
        d_state: 4,
        bottleneck: 2,
        deform_groups: 2,
        ..ModelConfig::default()
    };
    let model = Model::load(&Checkpoint::random(&cfg, opts.seed)?)?;
    let burst = rng.tensor_uniform([2, 4, 8, 8], 0.0, 1.0);
    let out = model.forward(&burst, &align::ZeroFlow)?;
    let bad = if out.shape() == [3, 64, 64] && out.all_finite() { 0.0 } else { 1.0 };
    r.assert("model", "tiny_forward_shape_finite", bad, 0.0);
    Ok(r.checks)
}

pub fn run_all(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut all = kernel_oracle_suite(opts)?;
    all.extend(degeneracy_suite(opts)?);
    all.extend(module_suite(opts)?);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(perturb: Option<&str>) -> SuiteOptions {
        SuiteOptions {
            instances: 5,
            seed: 1,
            perturb: perturb.map(str::to_string),
        }
    }

    #[test]
    fn clean_run_passes() {
        let checks = run_all(&quick(None)).unwrap();
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
        for k in KERNELS {
            assert!(checks.iter().any(|c| c.name == *k), "{k} has no check");
        }
    }

    #[test]
    fn perturbation_is_named() {
        for k in ["deform_conv", "window_partition", "pixel_shuffle"] {
            let checks = kernel_oracle_suite(&quick(Some(k))).unwrap();
            let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            assert_eq!(failed, vec![k]);
        }
        assert!(kernel_oracle_suite(&quick(Some("nope"))).is_err());
    }
}
