//! Fidelity and accuracy metrics on 8-bit images and bit messages.

use image::RgbImage;

use crate::error::{AswError, Result};
use crate::message::WatermarkMessage;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub ber_percent: f64,
}

fn same_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(AswError::ShapeMismatch(format!(
            "image {:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    Ok(())
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.as_raw().len() as f64;
    let sum: f64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    Ok(sum / n)
}

/// `10 log10(255² / MSE)` over all channels, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (PEAK * PEAK / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..wo {
            rows[y * wo + x] = k.iter().zip(&src[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = k
                .iter()
                .enumerate()
                .map(|(i, a)| a * rows[(y + i) * wo + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM (11×11 Gaussian window, σ = 1.5) over the valid region of each
/// RGB channel, averaged over the three channels.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w.min(h) < SSIM_WINDOW {
        return Err(AswError::InvalidDimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let mut total = 0.0;
    for ch in 0..3 {
        let pa: Vec<f64> = a.as_raw().iter().skip(ch).step_by(3).map(|&v| f64::from(v)).collect();
        let pb: Vec<f64> = b.as_raw().iter().skip(ch).step_by(3).map(|&v| f64::from(v)).collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, h, w, &k);
        let mu_b = filter_valid(&pb, h, w, &k);
        let s_aa = filter_valid(&aa, h, w, &k);
        let s_bb = filter_valid(&bb, h, w, &k);
        let s_ab = filter_valid(&ab, h, w, &k);
        let n = mu_a.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = s_aa[i] - ma * ma;
            let vb = s_bb[i] - mb * mb;
            let cov = s_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / n as f64;
    }
    Ok(total / 3.0)
}

/// Bit error rate in percent.
pub fn ber(a: &WatermarkMessage, b: &WatermarkMessage) -> Result<f64> {
    let d = a.hamming(b)?;
    Ok(100.0 * d as f64 / a.len() as f64)
}

pub fn report(host: &RgbImage, marked: &RgbImage, sent: &WatermarkMessage, got: &WatermarkMessage) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(host, marked)?,
        ssim: ssim(host, marked)?,
        ber_percent: ber(sent, got)?,
    })
}
