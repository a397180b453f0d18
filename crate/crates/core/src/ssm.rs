//! Selective state-space scan, the four-direction 2-D scan built on it, the
//! residual Mamba block and the decoder block that wraps it.

use rayon::prelude::*;

use crate::attention::{cfa_block, CfaParams};
use crate::error::{Error, Result};
use crate::ops::{self, Activation};
use crate::params::{Conv, Init, Linear, Norm, ParamSource};
use crate::tensor::Tensor;

/// Softplus with the usual linear fallback for large arguments.
pub fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Parameters of one selective scan over `Dinner` channels.
#[derive(Debug, Clone)]
pub struct SsmParams {
    /// `log(-A)`, `[Dinner, d_state]`.
    pub a_log: Tensor,
    /// `[Dinner]`
    pub skip_d: Tensor,
    /// `[Dinner, Dinner]`
    pub proj_delta: Tensor,
    /// `[Dinner]`
    pub delta_bias: Tensor,
    /// `[d_state, Dinner]`
    pub proj_b: Tensor,
    pub bias_b: Tensor,
    /// `[d_state, Dinner]`
    pub proj_c: Tensor,
    pub bias_c: Tensor,
}

pub const DELTA_INIT: f32 = 0.05;

impl SsmParams {
    pub fn declare(src: &mut dyn ParamSource, prefix: &str, inner: usize, d_state: usize) -> Result<Self> {
        let p = |n: &str| format!("{prefix}.{n}");
        Ok(Self {
            a_log: src.take(&p("a_log"), &[inner, d_state], Init::ALog)?,
            skip_d: src.take(&p("skip_d"), &[inner], Init::Const(1.0))?,
            proj_delta: src.take(&p("proj_delta"), &[inner, inner], Init::FanIn(inner))?,
            delta_bias: src.take(&p("delta_bias"), &[inner], Init::InverseSoftplus(DELTA_INIT))?,
            proj_b: src.take(&p("proj_b"), &[d_state, inner], Init::FanIn(inner))?,
            bias_b: src.take(&p("bias_b"), &[d_state], Init::Zeros)?,
            proj_c: src.take(&p("proj_c"), &[d_state, inner], Init::FanIn(inner))?,
            bias_c: src.take(&p("bias_c"), &[d_state], Init::Zeros)?,
        })
    }

    /// Skip-only scan: every projection and bias zero, `D = d`.
    pub fn skip_only(inner: usize, d_state: usize, d: f32) -> Self {
        let mut src = crate::params::InitSource::zeroed();
        let mut p = Self::declare(&mut src, "ssm", inner, d_state).expect("fresh source");
        p.skip_d = Tensor::full([inner], d);
        p
    }

    pub fn inner(&self) -> usize {
        self.skip_d.numel()
    }

    pub fn d_state(&self) -> usize {
        self.bias_b.numel()
    }

    fn check(&self) -> Result<()> {
        let (d, n) = (self.inner(), self.d_state());
        let ok = self.a_log.shape() == [d, n]
            && self.proj_delta.shape() == [d, d]
            && self.delta_bias.shape() == [d]
            && self.proj_b.shape() == [n, d]
            && self.proj_c.shape() == [n, d]
            && self.bias_c.shape() == [n];
        if ok {
            Ok(())
        } else {
            Err(Error::shape("selective_scan_1d", format!("inconsistent SsmParams for width {d}, state {n}")))
        }
    }
}

/// Zero-order hold for `A`, first-order for `B`: `(exp(Δ A), Δ B)`.
pub fn discretize(delta: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::invalid("discretize", format!("step {delta} must be > 0")));
    }
    Ok(((delta * a).exp(), delta * b))
}

/// `x · Wᵀ + b` in f64 for a `[L, D]` input and `[O, D]` weight.
fn project(x: &[f32], l: usize, d: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let o = b.numel();
    let (wd, bd) = (w.data(), b.data());
    let mut out = vec![0.0f64; l * o];
    out.par_chunks_mut(o).enumerate().for_each(|(t, row)| {
        let xr = &x[t * d..][..d];
        for (j, r) in row.iter_mut().enumerate() {
            let wr = &wd[j * d..][..d];
            *r = bd[j] as f64 + xr.iter().zip(wr).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>();
        }
    });
    out
}

/// Sequential left-to-right selective scan over `x: [L, Dinner]`:
///
/// ```text
/// h_t = exp(Δ_t A) h_{t-1} + Δ_t B_t x_t
/// y_t = C_t · h_t + D x_t
/// ```
///
/// with `Δ_t = softplus(W_Δ x_t + b_Δ)`, `B_t = W_B x_t + b_B`,
/// `C_t = W_C x_t + b_C`. The state is carried in f64.
pub fn selective_scan_1d(x: &Tensor, p: &SsmParams) -> Result<Tensor> {
    let (l, d) = x.dims2()?;
    if l == 0 {
        return Err(Error::invalid("selective_scan_1d", "empty sequence"));
    }
    if d != p.inner() {
        return Err(Error::shape(
            "selective_scan_1d",
            format!("input width {d}, parameters for {}", p.inner()),
        ));
    }
    p.check()?;
    let ds = p.d_state();
    let xd = x.data();
    let delta = project(xd, l, d, &p.proj_delta, &p.delta_bias);
    let bm = project(xd, l, d, &p.proj_b, &p.bias_b);
    let cm = project(xd, l, d, &p.proj_c, &p.bias_c);
    let a: Vec<f64> = p.a_log.data().iter().map(|&v| -(v as f64).exp()).collect();

    let columns: Vec<Vec<f32>> = (0..d)
        .into_par_iter()
        .map(|c| {
            let ac = &a[c * ds..][..ds];
            let skip = p.skip_d.data()[c] as f64;
            let mut h = vec![0.0f64; ds];
            let mut col = Vec::with_capacity(l);
            for t in 0..l {
                let dt = softplus(delta[t * d + c]);
                let xv = xd[t * d + c] as f64;
                let (bt, ct) = (&bm[t * ds..][..ds], &cm[t * ds..][..ds]);
                let mut y = 0.0;
                for n in 0..ds {
                    h[n] = (dt * ac[n]).exp() * h[n] + dt * bt[n] * xv;
                    y += ct[n] * h[n];
                }
                col.push((y + skip * xv) as f32);
            }
            col
        })
        .collect();
    let mut out = vec![0.0f32; l * d];
    for (c, col) in columns.iter().enumerate() {
        for (t, &v) in col.iter().enumerate() {
            out[t * d + c] = v;
        }
    }
    Tensor::new([l, d], out)?.finite_or("selective_scan_1d")
}

/// Scan order over a 2-D grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    RowForward,
    RowReverse,
    ColForward,
    ColReverse,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::RowForward,
        Direction::RowReverse,
        Direction::ColForward,
        Direction::ColReverse,
    ];
}

fn reverse_tokens(t: &Tensor) -> Result<Tensor> {
    let (l, c) = t.dims2()?;
    let src = t.data();
    let mut out = Vec::with_capacity(src.len());
    for i in (0..l).rev() {
        out.extend_from_slice(&src[i * c..][..c]);
    }
    Tensor::new([l, c], out)
}

/// One directional scan of a `[C,H,W]` map, returned in the input layout.
pub fn scan_direction(f: &Tensor, dir: Direction, p: &SsmParams) -> Result<Tensor> {
    let (_, h, w) = f.dims3()?;
    match dir {
        Direction::RowForward => selective_scan_1d(&f.chw_to_tokens()?, p)?.tokens_to_chw(h, w),
        Direction::RowReverse => {
            let y = selective_scan_1d(&reverse_tokens(&f.chw_to_tokens()?)?, p)?;
            reverse_tokens(&y)?.tokens_to_chw(h, w)
        }
        Direction::ColForward => scan_direction(&f.transpose_hw()?, Direction::RowForward, p)?.transpose_hw(),
        Direction::ColReverse => scan_direction(&f.transpose_hw()?, Direction::RowReverse, p)?.transpose_hw(),
    }
}

/// Four-direction scan with one parameter set per direction (in
/// [`Direction::ALL`] order); outputs are summed as `(y0 + y1) + (y2 + y3)`.
pub fn multi_scan_2d(f: &Tensor, params: &[SsmParams; 4]) -> Result<Tensor> {
    f.dims3()?;
    let ys = Direction::ALL
        .par_iter()
        .zip(params.par_iter())
        .map(|(&d, p)| scan_direction(f, d, p))
        .collect::<Result<Vec<_>>>()?;
    ys[0].add(&ys[1])?.add(&ys[2].add(&ys[3])?)
}

#[derive(Debug, Clone)]
pub struct RmbParams {
    pub in_ssm: Linear,
    pub in_gate: Linear,
    pub dwconv: Conv,
    pub ssm: [SsmParams; 4],
    pub norm: Norm,
    pub out_proj: Linear,
    pub local_down: Conv,
    pub local_up: Conv,
}

impl RmbParams {
    pub fn declare(
        src: &mut dyn ParamSource,
        prefix: &str,
        c: usize,
        expand: usize,
        d_state: usize,
        bottleneck: usize,
    ) -> Result<Self> {
        if expand == 0 || bottleneck == 0 || !c.is_multiple_of(bottleneck) {
            return Err(Error::invalid(
                "RmbParams",
                format!("width {c} needs expand >= 1 and a bottleneck factor dividing it, got {expand}/{bottleneck}"),
            ));
        }
        let inner = expand * c;
        let p = |n: &str| format!("{prefix}.{n}");
        let in_ssm = Linear::declare(src, &p("in_ssm"), c, inner)?;
        let in_gate = Linear::declare(src, &p("in_gate"), c, inner)?;
        let dwconv = Conv::declare(src, &p("dwconv"), inner, inner, 3, inner)?;
        let ssm = [
            SsmParams::declare(src, &p("ssm0"), inner, d_state)?,
            SsmParams::declare(src, &p("ssm1"), inner, d_state)?,
            SsmParams::declare(src, &p("ssm2"), inner, d_state)?,
            SsmParams::declare(src, &p("ssm3"), inner, d_state)?,
        ];
        Ok(Self {
            in_ssm,
            in_gate,
            dwconv,
            ssm,
            norm: Norm::declare(src, &p("norm"), inner)?,
            out_proj: Linear::declare(src, &p("out_proj"), inner, c)?,
            local_down: Conv::declare(src, &p("local_down"), c, c / bottleneck, 3, 1)?,
            local_up: Conv::declare(src, &p("local_up"), c / bottleneck, c, 3, 1)?,
        })
    }
}

/// Residual Mamba block on a `[C',H,W]` map:
///
/// ```text
/// F1  = LN(MS-SSM(SiLU(DWConv(Linear(F)))))
/// F2  = SiLU(Linear(F))
/// out = Linear(F1 ⊙ F2) + up(gelu(down(F)))
/// ```
pub fn rmb_block(f: &Tensor, p: &RmbParams) -> Result<Tensor> {
    let (c, h, w) = f.dims3()?;
    let tokens = f.chw_to_tokens()?;
    let a = p.in_ssm.forward(&tokens)?.tokens_to_chw(h, w)?;
    let a = ops::activation(&p.dwconv.forward_chw(&a)?, Activation::Silu);
    let scanned = multi_scan_2d(&a, &p.ssm)?.chw_to_tokens()?;
    let f1 = p.norm.forward(&scanned)?;
    let f2 = ops::activation(&p.in_gate.forward(&tokens)?, Activation::Silu);
    let mixed = p.out_proj.forward(&f1.mul(&f2)?)?.tokens_to_chw(h, w)?;
    let local = ops::activation(&p.local_down.forward_chw(f)?, Activation::Gelu);
    let local = p.local_up.forward_chw(&local)?;
    debug_assert_eq!(local.shape(), [c, h, w]);
    mixed.add(&local)?.finite_or("rmb_block")
}

#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub norm1: Norm,
    pub rmb: RmbParams,
    /// Per-channel skip scale `γ`.
    pub gamma: Tensor,
    pub norm2: Norm,
    pub conv: Conv,
    pub cfa: CfaParams,
    /// Per-channel residual scale `s'`.
    pub s_prime: Tensor,
}

impl DecoderParams {
    #[allow(clippy::too_many_arguments)]
    pub fn declare(
        src: &mut dyn ParamSource,
        prefix: &str,
        c: usize,
        expand: usize,
        d_state: usize,
        bottleneck: usize,
        beta: usize,
    ) -> Result<Self> {
        let p = |n: &str| format!("{prefix}.{n}");
        Ok(Self {
            norm1: Norm::declare(src, &p("norm1"), c)?,
            rmb: RmbParams::declare(src, &p("rmb"), c, expand, d_state, bottleneck)?,
            gamma: src.take(&p("gamma"), &[c], Init::Const(1.0))?,
            norm2: Norm::declare(src, &p("norm2"), c)?,
            conv: Conv::declare(src, &p("conv"), c, c, 3, 1)?,
            cfa: CfaParams::declare(src, &p("cfa"), c, beta)?,
            s_prime: src.take(&p("s_prime"), &[c], Init::Const(1.0))?,
        })
    }
}

/// ```text
/// F_l   = RMB(LN(F_a)) + γ ⊙ F_a
/// F_out = CFA(Conv(LN(F_l))) + s' ⊙ F_l
/// ```
pub fn decoder_block(fa: &Tensor, p: &DecoderParams) -> Result<Tensor> {
    let (c, h, w) = fa.dims3()?;
    let fl = rmb_block(&p.norm1.forward_channels(fa)?, &p.rmb)?.add(&fa.scale_channels(p.gamma.data())?)?;
    let conv = p.conv.forward_chw(&p.norm2.forward_channels(&fl)?)?;
    let cf = cfa_block(&conv.reshape([1, c, h, w])?, &p.cfa)?.reshape([c, h, w])?;
    cf.add(&fl.scale_channels(p.s_prime.data())?)?.finite_or("decoder_block")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::params::InitSource;
    use crate::rng::SplitMix64;

    fn random_ssm(inner: usize, ds: usize, seed: u64) -> SsmParams {
        let mut src = InitSource::random(seed);
        let mut p = SsmParams::declare(&mut src, "s", inner, ds).unwrap();
        let mut rng = SplitMix64::new(seed ^ 0xABCD);
        p.bias_b = rng.tensor_uniform([ds], -0.5, 0.5);
        p.bias_c = rng.tensor_uniform([ds], -0.5, 0.5);
        p.skip_d = rng.tensor_uniform([inner], -1.0, 1.0);
        p
    }

    #[test]
    fn discretize_closed_forms() {
        let (a, b) = discretize(2f64.ln(), -1.0, 3.0).unwrap();
        assert!((a - 0.5).abs() < 1e-15);
        assert!((b - 3.0 * 2f64.ln()).abs() < 1e-15);
        let (a, b) = discretize(1e-12, -1.0, 1.0).unwrap();
        assert!((a - 1.0).abs() < 1e-11 && b.abs() < 1e-11);
        assert!(discretize(0.0, -1.0, 1.0).is_err());
        assert!(discretize(-0.1, -1.0, 1.0).is_err());
        for i in 1..20 {
            for j in 1..20 {
                let (dt, av) = (i as f64 * 0.05, -(j as f64) * 0.1);
                let (abar, _) = discretize(dt, av, 1.0).unwrap();
                assert!((abar - (dt * av).exp()).abs() < 1e-6);
                assert!(abar < 1.0);
            }
        }
    }

    #[test]
    fn single_step_closed_form() {
        let p = random_ssm(3, 4, 1);
        let x = Tensor::new([1, 3], vec![0.4, -0.2, 0.9]).unwrap();
        let y = selective_scan_1d(&x, &p).unwrap();
        for c in 0..3 {
            let dot = |w: &Tensor, r: usize| -> f64 {
                (0..3).map(|i| w.data()[r * 3 + i] as f64 * x.data()[i] as f64).sum()
            };
            let dt = softplus(dot(&p.proj_delta, c) + p.delta_bias.data()[c] as f64);
            let xv = x.data()[c] as f64;
            let mut want = p.skip_d.data()[c] as f64 * xv;
            for n in 0..4 {
                let b = dot(&p.proj_b, n) + p.bias_b.data()[n] as f64;
                let cc = dot(&p.proj_c, n) + p.bias_c.data()[n] as f64;
                want += cc * dt * b * xv;
            }
            assert!((y.data()[c] as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let mut p = random_ssm(4, 3, 2);
        p.skip_d = Tensor::zeros([4]);
        let y = selective_scan_1d(&Tensor::zeros([7, 4]), &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_recurrence_oracle() {
        let p = random_ssm(5, 4, 3);
        let x = SplitMix64::new(4).tensor_uniform([12, 5], -1.0, 1.0);
        let got = selective_scan_1d(&x, &p).unwrap();
        assert!(got.max_abs_diff(&oracle::selective_scan(&x, &p)).unwrap() < 1e-5);
    }

    #[test]
    fn convolution_form_for_static_dynamics() {
        let mut p = random_ssm(4, 6, 5);
        for w in [&mut p.proj_delta, &mut p.proj_b, &mut p.proj_c] {
            *w = Tensor::zeros(w.shape().to_vec());
        }
        p.delta_bias = SplitMix64::new(6).tensor_uniform([4], -2.0, 0.5);
        let x = SplitMix64::new(7).tensor_uniform([16, 4], -1.0, 1.0);
        let got = selective_scan_1d(&x, &p).unwrap();
        assert!(got.max_abs_diff(&oracle::scan_convolution_form(&x, &p)).unwrap() < 1e-4);
    }

    #[test]
    fn scan_is_causal() {
        let p = random_ssm(3, 4, 8);
        let x = SplitMix64::new(9).tensor_uniform([10, 3], -1.0, 1.0);
        let mut x2 = x.clone();
        for v in &mut x2.data_mut()[6 * 3..] {
            *v += 5.0;
        }
        let (a, b) = (selective_scan_1d(&x, &p).unwrap(), selective_scan_1d(&x2, &p).unwrap());
        assert_eq!(a.data()[..6 * 3], b.data()[..6 * 3]);
        assert_ne!(a.data()[6 * 3..], b.data()[6 * 3..]);
    }

    #[test]
    fn skip_only_multi_scan_quadruples() {
        let p = SsmParams::skip_only(3, 4, 1.0);
        let ps = [p.clone(), p.clone(), p.clone(), p];
        let f = SplitMix64::new(10).tensor_uniform([3, 5, 6], -1.0, 1.0);
        assert_eq!(multi_scan_2d(&f, &ps).unwrap(), f.scale(4.0));
    }

    #[test]
    fn single_pixel_directions_agree() {
        let p = random_ssm(3, 2, 11);
        let f = SplitMix64::new(12).tensor_uniform([3, 1, 1], -1.0, 1.0);
        let ys: Vec<Tensor> = Direction::ALL.iter().map(|&d| scan_direction(&f, d, &p).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        let ps = [p.clone(), p.clone(), p.clone(), p];
        let four = multi_scan_2d(&f, &ps).unwrap();
        assert!(four.max_abs_diff(&ys[0].scale(4.0)).unwrap() < 1e-6);
    }

    #[test]
    fn column_scan_is_transposed_row_scan() {
        let p = random_ssm(2, 3, 13);
        let f = SplitMix64::new(14).tensor_uniform([2, 4, 7], -1.0, 1.0);
        let col = scan_direction(&f, Direction::ColForward, &p).unwrap();
        let row = scan_direction(&f.transpose_hw().unwrap(), Direction::RowForward, &p)
            .unwrap()
            .transpose_hw()
            .unwrap();
        assert_eq!(col, row);
    }

    fn rmb(c: usize, expand: usize, seed: u64) -> RmbParams {
        RmbParams::declare(&mut InitSource::random(seed), "rmb", c, expand, 4, 2).unwrap()
    }

    #[test]
    fn rmb_gate_off_leaves_bias_and_local() {
        let mut p = rmb(4, 2, 20);
        p.in_gate.weight = Tensor::zeros(p.in_gate.weight.shape().to_vec());
        p.out_proj.bias = Tensor::new([4], vec![0.1, -0.2, 0.3, 0.0]).unwrap();
        p.local_up.weight = Tensor::zeros(p.local_up.weight.shape().to_vec());
        let f = SplitMix64::new(21).tensor_uniform([4, 5, 5], -1.0, 1.0);
        let out = rmb_block(&f, &p).unwrap();
        for (ch, plane) in out.data().chunks(25).enumerate() {
            assert!(plane.iter().all(|&v| v == p.out_proj.bias.data()[ch]));
        }
        assert!(RmbParams::declare(&mut InitSource::zeroed(), "r", 6, 2, 4, 4).is_err());
    }

    #[test]
    fn rmb_identity_linears_skip_only_scan() {
        // λ = 1, identity projections, D-only scan with D = 1/4 and no local path:
        // F1 = LN(silu(F)), F2 = silu(F), out = F1 ⊙ F2.
        let c = 4;
        let mut p = rmb(c, 1, 22);
        let eye = Tensor::from_fn([c, c], |i| if i / c == i % c { 1.0 } else { 0.0 });
        p.in_ssm.weight = eye.clone();
        p.in_gate.weight = eye.clone();
        p.out_proj.weight = eye;
        p.dwconv.weight = Tensor::from_fn([c, 1, 3, 3], |i| if i % 9 == 4 { 1.0 } else { 0.0 });
        let skip = SsmParams::skip_only(c, 4, 0.25);
        p.ssm = [skip.clone(), skip.clone(), skip.clone(), skip];
        p.local_up.weight = Tensor::zeros(p.local_up.weight.shape().to_vec());
        let f = SplitMix64::new(23).tensor_uniform([c, 6, 6], -1.0, 1.0);
        let got = rmb_block(&f, &p).unwrap();

        let s = ops::activation(&f, Activation::Silu);
        let ln = oracle::layer_norm(&s.chw_to_tokens().unwrap(), &p.norm.gamma, &p.norm.beta, 1e-5)
            .tokens_to_chw(6, 6)
            .unwrap();
        let want = ln.mul(&s).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-5);
    }

    #[test]
    fn rmb_shape() {
        let p = rmb(8, 2, 24);
        let f = SplitMix64::new(25).tensor_uniform([8, 16, 16], -1.0, 1.0);
        assert_eq!(rmb_block(&f, &p).unwrap().shape(), &[8, 16, 16]);
    }

    #[test]
    fn decoder_zero_weights_closed_form() {
        let c = 8;
        let mut p = DecoderParams::declare(&mut InitSource::zeroed(), "d", c, 2, 4, 2, 4).unwrap();
        let f = SplitMix64::new(26).tensor_uniform([c, 6, 6], -1.0, 1.0);
        assert_eq!(decoder_block(&f, &p).unwrap(), f);

        // Conv bias b: CFA sees a constant map b, gate = sigmoid(0) = 1/2.
        let b = SplitMix64::new(27).tensor_uniform([c], -1.0, 1.0);
        p.conv.bias = b.clone();
        p.s_prime = Tensor::full([c], 0.5);
        let out = decoder_block(&f, &p).unwrap();
        for ch in 0..c {
            for i in 0..36 {
                let want = 0.5 * b.data()[ch] + 0.5 * f.data()[ch * 36 + i];
                assert!((out.data()[ch * 36 + i] - want).abs() < 1e-6);
            }
        }

        p.gamma = Tensor::zeros([c]);
        p.rmb.out_proj.bias = Tensor::full([c], 0.3);
        p.conv.bias = Tensor::zeros([c]);
        p.s_prime = Tensor::full([c], 1.0);
        let out = decoder_block(&f, &p).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn decoder_shape() {
        let p = DecoderParams::declare(&mut InitSource::random(28), "d", 8, 2, 4, 4, 4).unwrap();
        let f = SplitMix64::new(29).tensor_uniform([8, 8, 12], -1.0, 1.0);
        assert_eq!(decoder_block(&f, &p).unwrap().shape(), &[8, 8, 12]);
    }
}
