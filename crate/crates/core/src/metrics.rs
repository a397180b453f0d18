//! Image quality metrics and resolution-chart analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// PSNR reported for (near-)identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

/// `10 log10(peak^2 / MSE)`, capped at [`PSNR_CAP_DB`] when `MSE < 1e-12`.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("psnr", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.numel() == 0 {
        return Err(Error::invalid("psnr", "empty images"));
    }
    if !(peak > 0.0) {
        return Err(Error::invalid("psnr", format!("peak {peak} must be > 0")));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.numel() as f64;
    Ok(psnr_from_mse(mse, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse < 1e-12 {
        PSNR_CAP_DB
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

fn gaussian(window: usize, sigma: f64) -> Vec<f64> {
    let c = (window as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..window)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter over the valid region of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = g.iter().enumerate().map(|(i, &gv)| gv * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = g.iter().enumerate().map(|(i, &gv)| gv * rows[(y + i) * wo + x]).sum();
        }
    }
    out
}

/// Per-window luminance and contrast-structure terms for one channel.
fn ssim_terms(a: &[f32], b: &[f32], h: usize, w: usize, p: &SsimParams) -> (Vec<f64>, Vec<f64>) {
    let g = gaussian(p.window, p.sigma);
    let c1 = (p.k1 * p.data_range).powi(2);
    let c2 = (p.k2 * p.data_range).powi(2);
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| u * v).collect() };
    let mu_a = filter_valid(&a, h, w, &g);
    let mu_b = filter_valid(&b, h, w, &g);
    let e_aa = filter_valid(&prod(&a, &a), h, w, &g);
    let e_bb = filter_valid(&prod(&b, &b), h, w, &g);
    let e_ab = filter_valid(&prod(&a, &b), h, w, &g);
    let mut lum = Vec::with_capacity(mu_a.len());
    let mut cs = Vec::with_capacity(mu_a.len());
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        lum.push((2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1));
        cs.push((2.0 * cov + c2) / (va + vb + c2));
    }
    (lum, cs)
}

fn planes(a: &Tensor, b: &Tensor, op: &'static str, window: usize) -> Result<(usize, usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let (c, h, w) = match a.rank() {
        2 => (1, a.shape()[0], a.shape()[1]),
        3 => a.dims3()?,
        _ => return Err(Error::shape(op, format!("expected [H,W] or [C,H,W], got {:?}", a.shape()))),
    };
    if h < window || w < window {
        return Err(Error::shape(op, format!("{h}x{w} image is smaller than the {window}x{window} window")));
    }
    Ok((c, h, w))
}

/// Mean SSIM with a Gaussian window over the valid region, averaged over
/// channels. Identical inputs give exactly `1.0`.
pub fn ssim_with(a: &Tensor, b: &Tensor, p: &SsimParams) -> Result<f64> {
    let (c, h, w) = planes(a, b, "ssim", p.window)?;
    let mut total = 0.0;
    for ch in 0..c {
        let (pa, pb) = (&a.data()[ch * h * w..][..h * w], &b.data()[ch * h * w..][..h * w]);
        let (lum, cs) = ssim_terms(pa, pb, h, w, p);
        let s: f64 = lum.iter().zip(&cs).map(|(l, c)| l * c).sum();
        total += s / lum.len() as f64;
    }
    Ok(total / c as f64)
}

pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

/// Mean of the contrast-structure term alone; unaffected by adding the same
/// constant to both images.
pub fn ssim_contrast_structure(a: &Tensor, b: &Tensor, p: &SsimParams) -> Result<f64> {
    let (c, h, w) = planes(a, b, "ssim", p.window)?;
    let mut total = 0.0;
    for ch in 0..c {
        let (pa, pb) = (&a.data()[ch * h * w..][..h * w], &b.data()[ch * h * w..][..h * w]);
        let (_, cs) = ssim_terms(pa, pb, h, w, p);
        total += cs.iter().sum::<f64>() / cs.len() as f64;
    }
    Ok(total / c as f64)
}

/// How per-period extrema are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extrema {
    /// Mean of the top / bottom quartile of samples in each period.
    #[default]
    Robust,
    /// Plain max / min per period.
    Raw,
}

/// Contrast at or above which a line pair counts as resolved.
pub const RESOLVED_CONTRAST: f64 = 0.1;

/// Intensity profile along `start → end` (pixel coordinates `(x, y)`):
/// `max(8, ceil(2 * period))` bilinear samples per period, at sub-interval
/// midpoints, over every whole period that fits.
pub fn sample_profile(image: &Tensor, start: (f64, f64), end: (f64, f64), period_px: f64) -> Result<Vec<Vec<f64>>> {
    let (c, h, w) = match image.rank() {
        2 => (1, image.shape()[0], image.shape()[1]),
        3 => image.dims3()?,
        _ => return Err(Error::shape("line_pair_contrast", format!("expected [H,W] or [C,H,W], got {:?}", image.shape()))),
    };
    if h == 0 || w == 0 {
        return Err(Error::shape("line_pair_contrast", "empty image"));
    }
    if !(period_px > 0.0 && period_px.is_finite()) {
        return Err(Error::invalid("line_pair_contrast", format!("period {period_px} must be > 0")));
    }
    let (dx, dy) = (end.0 - start.0, end.1 - start.1);
    let len = (dx * dx + dy * dy).sqrt();
    let periods = (len / period_px + 1e-9).floor() as usize;
    if periods < 2 {
        return Err(Error::invalid(
            "line_pair_contrast",
            format!("segment of {len:.2} px holds fewer than 2 periods of {period_px} px"),
        ));
    }
    let k = ((2.0 * period_px).ceil() as usize).max(8);
    let (ux, uy) = (dx / len, dy / len);
    let mut out = Vec::with_capacity(periods);
    for p in 0..periods {
        let mut samples = Vec::with_capacity(k);
        for j in 0..k {
            let t = (p as f64 + (j as f64 + 0.5) / k as f64) * period_px;
            let (x, y) = (start.0 + ux * t, start.1 + uy * t);
            let v: f64 = (0..c)
                .map(|ch| ops::sample_clamped(&image.data()[ch * h * w..][..h * w], h, w, x, y))
                .sum::<f64>()
                / c as f64;
            samples.push(v);
        }
        out.push(samples);
    }
    Ok(out)
}

/// Michelson contrast of the mean per-period maximum and minimum.
/// A flat or non-positive profile gives `0`.
pub fn contrast_of_profile(periods: &[Vec<f64>], mode: Extrema) -> f64 {
    let (mut hi, mut lo) = (0.0, 0.0);
    for samples in periods {
        let mut s = samples.clone();
        s.sort_by(|a, b| a.total_cmp(b));
        let (mx, mn) = match mode {
            Extrema::Raw => (s[s.len() - 1], s[0]),
            Extrema::Robust => {
                let q = s.len().div_ceil(4);
                let top: f64 = s[s.len() - q..].iter().sum::<f64>() / q as f64;
                let bottom: f64 = s[..q].iter().sum::<f64>() / q as f64;
                (top, bottom)
            }
        };
        hi += mx;
        lo += mn;
    }
    hi /= periods.len() as f64;
    lo /= periods.len() as f64;
    if hi + lo <= 0.0 || hi - lo <= 0.0 {
        0.0
    } else {
        (hi - lo) / (hi + lo)
    }
}

pub fn line_pair_contrast(
    image: &Tensor,
    start: (f64, f64),
    end: (f64, f64),
    period_px: f64,
    mode: Extrema,
) -> Result<f64> {
    Ok(contrast_of_profile(&sample_profile(image, start, end, period_px)?, mode))
}

/// Sensor geometry used to convert chart readings to line pairs per mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartGeometry {
    pub pixel_pitch_um: f64,
    pub sensor_rows: usize,
    pub sensor_cols: usize,
    pub eval_height_px: usize,
    pub eval_height_mm: f64,
    /// Decimals the LP/mm factor is rounded to before use.
    pub factor_decimals: u32,
    /// Skip the rounding and use the geometric factor as is.
    pub exact_factor: bool,
}

impl Default for ChartGeometry {
    fn default() -> Self {
        Self {
            pixel_pitch_um: 15.0,
            sensor_rows: 512,
            sensor_cols: 640,
            eval_height_px: 360,
            eval_height_mm: 5.4,
            factor_decimals: 2,
            exact_factor: false,
        }
    }
}

impl ChartGeometry {
    pub fn validate(&self) -> Result<()> {
        let implied = self.eval_height_px as f64 * self.pixel_pitch_um / 1000.0;
        if !(self.eval_height_mm > 0.0) || (implied - self.eval_height_mm).abs() > 1e-9 {
            return Err(Error::invalid(
                "ChartGeometry",
                format!(
                    "eval_height_mm {} disagrees with {} px at {} um",
                    self.eval_height_mm, self.eval_height_px, self.pixel_pitch_um
                ),
            ));
        }
        Ok(())
    }

    /// LP/mm per unit of chart reading (hundreds of LW/PH): one line pair is
    /// two line widths, spread over the evaluated height in mm.
    pub fn lpmm_per_reading(&self) -> f64 {
        let exact = 100.0 / (2.0 * self.eval_height_mm);
        if self.exact_factor {
            return exact;
        }
        let scale = 10f64.powi(self.factor_decimals.min(15) as i32);
        (exact * scale).round() / scale
    }
}

/// Chart reading in hundreds of line widths per picture height → LP/mm.
pub fn chart_reading_to_lpmm(reading: f64, geometry: &ChartGeometry) -> Result<f64> {
    if !(reading > 0.0 && reading.is_finite()) {
        return Err(Error::invalid("chart_reading_to_lpmm", format!("reading {reading} must be > 0")));
    }
    geometry.validate()?;
    Ok(reading * geometry.lpmm_per_reading())
}
