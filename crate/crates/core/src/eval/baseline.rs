//! Classical full-reference metrics used as baselines.

use crate::data::GrayImage;
use crate::error::{Error, Result};

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_size(op: &'static str, a: &GrayImage, b: &GrayImage) -> Result<()> {
    if !a.same_size(b) {
        return Err(Error::Input(format!(
            "{op}: image sizes differ ({}x{} vs {}x{})",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_size("mse", a, b)?;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.pixels().len() as f64)
}

/// Peak signal-to-noise ratio in dB for `[0, 1]` images, capped at [`PSNR_CAP_DB`].
pub fn psnr(distorted: &GrayImage, reference: &GrayImage) -> Result<f64> {
    let e = mse(distorted, reference)?;
    if e == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / e).log10()).min(PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Valid-region separable filtering of a `w x h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over the valid region, 11x11 Gaussian window (sigma 1.5).
pub fn ssim(distorted: &GrayImage, reference: &GrayImage) -> Result<f64> {
    same_size("ssim", distorted, reference)?;
    let (w, h) = (distorted.width(), distorted.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Input(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {w}x{h}"
        )));
    }
    let x: Vec<f64> = distorted.pixels().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = reference.pixels().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, w, h, &taps));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mx.len();
    let mut total = 0.0;
    for i in 0..n {
        total += ssim_term(mx[i], my[i], sxx[i], syy[i], sxy[i], c1, c2);
    }
    Ok(total / n as f64)
}

/// Local SSIM from windowed first and second moments.
pub(crate) fn ssim_term(mx: f64, my: f64, exx: f64, eyy: f64, exy: f64, c1: f64, c2: f64) -> f64 {
    let vx = exx - mx * mx;
    let vy = eyy - my * my;
    let cov = exy - mx * my;
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}
