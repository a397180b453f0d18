//! Throughput of the three heaviest kernels at fixed sizes.

use std::time::Instant;

use serde::Serialize;

use crate::align;
use crate::attention::{self, RelPosBias, WindowSpec};
use crate::error::Result;
use crate::params::InitSource;
use crate::rng::SplitMix64;
use crate::ssm::{self, SsmParams};

pub const DEFAULT_SIZES: &[usize] = &[16, 32];
pub const CHANNELS: usize = 24;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub kernel: &'static str,
    /// Side of the square feature map.
    pub size: usize,
    pub calls: usize,
    pub seconds: f64,
    pub ops_per_sec: f64,
}

fn time(kernel: &'static str, size: usize, min_seconds: f64, mut f: impl FnMut() -> Result<()>) -> Result<BenchRow> {
    f()?;
    let start = Instant::now();
    let mut calls = 0;
    while calls == 0 || start.elapsed().as_secs_f64() < min_seconds {
        f()?;
        calls += 1;
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchRow {
        kernel,
        size,
        calls,
        seconds,
        ops_per_sec: calls as f64 / seconds,
    })
}

/// Times window attention (P = 8, r = 0.5, 4 heads), one selective-scan
/// direction and a 3x3 deformable convolution on `CHANNELS x size x size`
/// maps. Each kernel runs for at least `min_seconds`.
pub fn run(sizes: &[usize], min_seconds: f64, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rng = SplitMix64::new(seed);
    let c = CHANNELS;
    let spec = WindowSpec::new(8, 0.5, 4)?;
    let bias = RelPosBias::zeros(&spec);
    let ssm_p = SsmParams::declare(&mut InitSource::random(seed), "bench", c, 16)?;
    let mut rows = Vec::new();
    for &s in sizes {
        let side = s.div_ceil(8) * 8;
        let f = rng.tensor_uniform([1, c, side, side], -1.0, 1.0);
        let q = attention::partition_q_windows(&f, &spec)?;
        let kv = attention::extract_kv_windows(&f, &spec)?;
        rows.push(time("window_attention", side, min_seconds, || {
            attention::window_attention(&q, &kv, &kv, &bias, spec.heads).map(drop)
        })?);

        let chw = rng.tensor_uniform([c, s, s], -1.0, 1.0);
        rows.push(time("selective_scan", s, min_seconds, || {
            ssm::scan_direction(&chw, ssm::Direction::RowForward, &ssm_p).map(drop)
        })?);

        let off = rng.tensor_uniform([18 * 4, s, s], -2.0, 2.0);
        let w = rng.tensor_uniform([c, c, 3, 3], -0.1, 0.1);
        rows.push(time("deform_conv", s, min_seconds, || {
            align::deform_conv(&chw, &off, &w, None, 4).map(drop)
        })?);
    }
    Ok(rows)
}
