//! Property tests for invariants that hold across random shapes and inputs.

use burstforge::align::{self, FlowField};
use burstforge::attention::{self, McaWeights, WindowSpec};
use burstforge::io;
use burstforge::metrics::{self, Extrema};
use burstforge::model::{Checkpoint, ModelConfig};
use burstforge::ops;
use burstforge::params::InitSource;
use burstforge::rng::SplitMix64;
use burstforge::simulate::{self, SyntheticBurstSpec, Transform};
use burstforge::ssm::{self, SsmParams};
use burstforge::Tensor;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn rand(seed: u64, shape: impl Into<Vec<usize>>) -> Tensor {
    SplitMix64::new(seed).tensor_uniform(shape, -1.0, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pixel_shuffle_inverts(seed: u64, n in 1usize..3, c in 1usize..4, h in 1usize..6, w in 1usize..6, u in 1usize..4) {
        let x = rand(seed, [n, c * u * u, h, w]);
        let y = ops::pixel_shuffle(&x, u).unwrap();
        prop_assert_eq!(y.shape(), &[n, c, h * u, w * u]);
        prop_assert_eq!(ops::pixel_unshuffle(&y, u).unwrap(), x);
    }

    #[test]
    fn softmax_rows_are_distributions(seed: u64, rows in 1usize..5, d in 1usize..16, scale in 0.1f64..30.0) {
        let x = SplitMix64::new(seed).tensor_uniform([rows, d], -scale, scale);
        let y = ops::softmax_lastdim(&x).unwrap();
        for row in y.data().chunks(d) {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-5);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn layer_norm_standardizes(seed: u64, rows in 1usize..5, d in 2usize..20, shift in -50.0f32..50.0) {
        let x = rand(seed, [rows, d]).map(|v| 3.0 * v + shift);
        let y = ops::layer_norm(&x, &Tensor::full([d], 1.0), &Tensor::zeros([d]), ops::LAYER_NORM_EPS).unwrap();
        for row in y.data().chunks(d) {
            let m: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
            prop_assert!(m.abs() < 1e-4);
        }
    }

    #[test]
    fn conv_is_linear(seed: u64, cin in 1usize..4, cout in 1usize..4, h in 3usize..8, w in 3usize..8, a in -2.0f32..2.0) {
        let x = rand(seed, [1, cin, h, w]);
        let y = rand(seed ^ 1, [1, cin, h, w]);
        let k = rand(seed ^ 2, [cout, cin, 3, 3]);
        let p = ops::Conv2dParams::same(3);
        let lhs = ops::conv2d(&x.scale(a).add(&y).unwrap(), &k, None, p).unwrap();
        let rhs = ops::conv2d(&x, &k, None, p).unwrap().scale(a).add(&ops::conv2d(&y, &k, None, p).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-4);
    }

    #[test]
    fn window_partition_round_trips(seed: u64, p in 1usize..5, r in 0.0f64..1.5, b in 1usize..3, c in 1usize..4, nh in 1usize..4, nw in 1usize..4) {
        let spec = WindowSpec::new(p, r, 1).unwrap();
        prop_assert!(spec.kv_window >= p && (spec.kv_window - p).is_multiple_of(2));
        let f = rand(seed, [b, c, p * nh, p * nw]);
        let q = attention::partition_q_windows(&f, &spec).unwrap();
        prop_assert_eq!(q.shape(), &[b * nh * nw, p * p, c]);
        prop_assert_eq!(attention::merge_q_windows(&q, b, p * nh, p * nw, &spec).unwrap(), f.clone());
        let kv = attention::extract_kv_windows(&f, &spec).unwrap();
        prop_assert_eq!(kv.shape(), &[b * nh * nw, spec.kv_window * spec.kv_window, c]);
    }

    #[test]
    fn mca_preserves_shape(seed: u64, frames in 1usize..3, heads in 1usize..3, h in 2usize..10, w in 2usize..10) {
        let c = 4 * heads;
        let spec = WindowSpec::new(4, 0.5, heads).unwrap();
        let wts = McaWeights::declare(&mut InitSource::random(seed), "m", frames, c, &spec, 2).unwrap();
        let f = rand(seed, [frames, c, h, w]);
        let out = attention::mca_encoder_block(&f, &wts, &spec, 1.0).unwrap();
        prop_assert_eq!(out.shape(), f.shape());
        prop_assert!(out.all_finite());
    }

    #[test]
    fn scan_is_causal(seed: u64, l in 2usize..12, d in 1usize..4, cut in 0usize..11) {
        let cut = cut % (l - 1) + 1;
        let p = SsmParams::declare(&mut InitSource::random(seed), "s", d, 3).unwrap();
        let x = rand(seed ^ 7, [l, d]);
        let mut x2 = x.clone();
        for v in &mut x2.data_mut()[cut * d..] {
            *v = -*v + 0.5;
        }
        let (a, b) = (ssm::selective_scan_1d(&x, &p).unwrap(), ssm::selective_scan_1d(&x2, &p).unwrap());
        prop_assert_eq!(&a.data()[..cut * d], &b.data()[..cut * d]);
    }

    #[test]
    fn static_scan_is_linear_in_input(seed: u64, l in 1usize..10, d in 1usize..4, a in -3.0f32..3.0) {
        let mut p = SsmParams::declare(&mut InitSource::random(seed), "s", d, 3).unwrap();
        for w in [&mut p.proj_delta, &mut p.proj_b, &mut p.proj_c] {
            *w = Tensor::zeros(w.shape().to_vec());
        }
        p.bias_b = rand(seed ^ 3, [3]);
        p.bias_c = rand(seed ^ 4, [3]);
        let x = rand(seed ^ 5, [l, d]);
        let y = ssm::selective_scan_1d(&x, &p).unwrap();
        let ya = ssm::selective_scan_1d(&x.scale(a), &p).unwrap();
        prop_assert!(ya.max_abs_diff(&y.scale(a)).unwrap() < 1e-5);
    }

    #[test]
    fn multi_scan_commutes_with_transpose_and_rot180(seed: u64, c in 1usize..3, h in 1usize..6, w in 1usize..6) {
        // Transposing the map swaps the row and column scans; rotating by
        // 180 degrees swaps forward and reverse scans.
        let base: Vec<SsmParams> = (0..4).map(|i| SsmParams::declare(&mut InitSource::random(seed + i), "s", c, 2).unwrap()).collect();
        let ps = [base[0].clone(), base[1].clone(), base[2].clone(), base[3].clone()];
        let f = rand(seed ^ 9, [c, h, w]);
        let y = ssm::multi_scan_2d(&f, &ps).unwrap();

        let swapped = [base[2].clone(), base[3].clone(), base[0].clone(), base[1].clone()];
        let yt = ssm::multi_scan_2d(&f.transpose_hw().unwrap(), &swapped).unwrap().transpose_hw().unwrap();
        prop_assert!(yt.max_abs_diff(&y).unwrap() < 1e-5);

        let rot = |t: &Tensor| Tensor::from_fn(t.shape().to_vec(), |i| {
            let (ch, p) = (i / (h * w), i % (h * w));
            t.data()[ch * h * w + (h * w - 1 - p)]
        });
        let flipped = [base[1].clone(), base[0].clone(), base[3].clone(), base[2].clone()];
        let yr = rot(&ssm::multi_scan_2d(&rot(&f), &flipped).unwrap());
        prop_assert!(yr.max_abs_diff(&y).unwrap() < 1e-5);
    }

    #[test]
    fn integer_warp_is_shift(seed: u64, c in 1usize..3, h in 6usize..12, w in 6usize..12, dx in -2i32..=2, dy in -2i32..=2) {
        let f = rand(seed, [c, h, w]);
        let out = align::warp(&f, &FlowField::constant(h, w, dx as f32, dy as f32)).unwrap();
        for ch in 0..c {
            for y in 2..h - 2 {
                for x in 2..w - 2 {
                    let sy = (y as i32 + dy) as usize;
                    let sx = (x as i32 + dx) as usize;
                    prop_assert_eq!(out.data()[(ch * h + y) * w + x], f.data()[(ch * h + sy) * w + sx]);
                }
            }
        }
    }

    #[test]
    fn psnr_and_ssim_are_symmetric(seed: u64, amp in 0.001f32..0.3) {
        let a = SplitMix64::new(seed).tensor_uniform([3, 16, 16], 0.0, 1.0);
        let b = a.add(&rand(seed ^ 1, [3, 16, 16]).scale(amp)).unwrap();
        prop_assert_eq!(metrics::psnr(&a, &b, 1.0).unwrap(), metrics::psnr(&b, &a, 1.0).unwrap());
        let (s1, s2) = (metrics::ssim(&a, &b).unwrap(), metrics::ssim(&b, &a).unwrap());
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!(s1 <= 1.0);
    }

    #[test]
    fn ssim_structure_ignores_common_offset(seed: u64, k in -0.5f32..0.5) {
        let p = metrics::SsimParams::default();
        let a = SplitMix64::new(seed).tensor_uniform([1, 16, 16], 0.2, 0.8);
        let b = SplitMix64::new(seed ^ 1).tensor_uniform([1, 16, 16], 0.2, 0.8);
        let base = metrics::ssim_contrast_structure(&a, &b, &p).unwrap();
        let moved = metrics::ssim_contrast_structure(&a.map(|v| v + k), &b.map(|v| v + k), &p).unwrap();
        prop_assert!((base - moved).abs() < 1e-4);
    }

    #[test]
    fn contrast_is_scale_invariant(seed: u64, period in 6usize..16, exp in -3i32..4) {
        let img = Tensor::from_fn([4, 64], |i| {
            let x = i % 64;
            let v = if x % period < period / 2 { 0.9 } else { 0.2 };
            v + 0.01 * ((seed.wrapping_add(x as u64) % 7) as f32)
        });
        let a = 2f32.powi(exp);
        let c1 = metrics::line_pair_contrast(&img, (0.0, 2.0), (63.0, 2.0), period as f64, Extrema::Robust).unwrap();
        let c2 = metrics::line_pair_contrast(&img.scale(a), (0.0, 2.0), (63.0, 2.0), period as f64, Extrema::Robust).unwrap();
        prop_assert!((c1 - c2).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&c1));
    }

    #[test]
    fn degraded_frames_stay_in_range(seed: u64, dx in -2.0f64..2.0, dy in -2.0f64..2.0, th in -1.0f64..1.0) {
        let hr = simulate::smooth_image(3, 32, 32, 2.0, seed);
        let spec = SyntheticBurstSpec { n_frames: 1, read_noise: 0.05, shot_noise: 0.1, ..Default::default() };
        let f = simulate::degrade(&hr, &Transform { dx, dy, theta_deg: th }, &spec, &mut SplitMix64::new(seed)).unwrap();
        prop_assert_eq!(f.shape(), &[4, 4, 4]);
        prop_assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn tensor_and_flow_files_round_trip(seed: u64, dims in proptest::collection::vec(0usize..5, 0..4), h in 1usize..6, w in 1usize..6) {
        let t = rand(seed, dims);
        let bytes = io::encode_tensor(&t);
        let back = io::decode_tensor(&bytes).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(io::encode_tensor(&back), bytes);
        let flow = FlowField::new(rand(seed, [2, h, w]).scale(5.0)).unwrap();
        let back = io::decode_flow(&io::encode_flow(&flow)).unwrap();
        prop_assert_eq!(back.tensor(), flow.tensor());
    }

    #[test]
    fn pnm_round_trips(seed: u64, c in prop_oneof![Just(1usize), Just(3usize)], h in 1usize..6, w in 1usize..6, maxval in 1u16..=65535) {
        let mut rng = SplitMix64::new(seed);
        let img = io::ImageFile {
            width: w,
            height: h,
            channels: c,
            maxval,
            samples: (0..w * h * c).map(|_| (rng.next_u64() % (maxval as u64 + 1)) as u16).collect(),
        };
        let bytes = io::encode_pnm(&img);
        prop_assert_eq!(io::decode_pnm(&bytes).unwrap(), img.clone());
        let t = img.to_tensor();
        prop_assert_eq!(io::ImageFile::from_tensor(&t, maxval).unwrap(), img);
    }

    #[test]
    fn checkpoint_files_round_trip(seed: u64, count in 0usize..5) {
        let mut tensors = BTreeMap::new();
        for i in 0..count {
            tensors.insert(format!("t{i}.weight"), rand(seed + i as u64, [i + 1, 2]));
        }
        let ck = Checkpoint { config: ModelConfig::default(), tensors };
        let bytes = io::encode_checkpoint(&ck);
        let back = io::decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&back.tensors, &ck.tensors);
        prop_assert_eq!(io::encode_checkpoint(&back), bytes);
    }
}
