//! Procedural reference images and graded distortions for desk-scale experiments.
//!
//! Scores written by [`synth_generate`] are pseudo-MOS values derived from the
//! distortion parameters, not human ratings.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::{GrayImage, Manifest, Sample};

pub const SYNTH_SIZE: usize = 256;
/// Pseudo-MOS of the mildest level; the strongest level scores 0.
pub const SYNTH_MAX_SCORE: f64 = 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Distortion {
    Blur,
    Noise,
    Quantize,
}

impl Distortion {
    pub const ALL: [Distortion; 3] = [Distortion::Blur, Distortion::Noise, Distortion::Quantize];

    pub fn name(self) -> &'static str {
        match self {
            Distortion::Blur => "blur",
            Distortion::Noise => "noise",
            Distortion::Quantize => "quantize",
        }
    }

    /// Position of `level` along the family's parameter range, in `[0, 1]`.
    pub fn magnitude(level: usize, levels: usize) -> f64 {
        if levels < 2 {
            1.0
        } else {
            level as f64 / (levels - 1) as f64
        }
    }

    /// Blur sigma, noise sigma, or quantization bit depth at normalized magnitude `t`.
    pub fn parameter(self, t: f64) -> f64 {
        match self {
            Distortion::Blur => 0.5 + 3.5 * t,
            Distortion::Noise => 0.01 + 0.14 * t,
            Distortion::Quantize => 6.0 - 4.0 * t,
        }
    }

    pub fn apply(self, img: &GrayImage, t: f64, rng: &mut impl Rng) -> GrayImage {
        let p = self.parameter(t);
        match self {
            Distortion::Blur => gaussian_blur(img, p),
            Distortion::Noise => add_white_noise(img, p, rng),
            Distortion::Quantize => quantize(img, p),
        }
    }
}

pub fn pseudo_mos(level: usize, levels: usize) -> f64 {
    SYNTH_MAX_SCORE * (1.0 - Distortion::magnitude(level, levels))
}

/// Separable Gaussian blur with clamped borders; `sigma <= 0` returns the input unchanged.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let (w, h) = (img.width(), img.height());
    let src: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * src[y * w + clamp(x as isize + i as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp(y as isize + i as isize - radius, h) * w + x])
                .sum();
            out[y * w + x] = v.clamp(0.0, 1.0) as f32;
        }
    }
    GrayImage::new(w, h, out).expect("blur keeps range")
}

/// Additive white Gaussian noise, clipped to `[0, 1]`.
pub fn add_white_noise(img: &GrayImage, sigma: f64, rng: &mut impl Rng) -> GrayImage {
    let px = img
        .pixels()
        .iter()
        .map(|&p| (p as f64 + sigma * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0) as f32)
        .collect();
    GrayImage::new(img.width(), img.height(), px).expect("clipped noise keeps range")
}

/// Uniform quantization to `round(2^bits)` gray levels.
pub fn quantize(img: &GrayImage, bits: f64) -> GrayImage {
    let steps = (2f64.powf(bits).round() - 1.0).max(1.0);
    let px = img
        .pixels()
        .iter()
        .map(|&p| ((p as f64 * steps).round() / steps) as f32)
        .collect();
    GrayImage::new(img.width(), img.height(), px).expect("quantization keeps range")
}

/// Renders one reference: a blend of a linear gradient, a checkerboard and band-limited noise,
/// rounded to 8 bits.
pub fn render_reference(size: usize, rng: &mut impl Rng) -> GrayImage {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let cell = rng.random_range(6..40) as f64;
    let shift = (rng.random_range(0.0..cell), rng.random_range(0.0..cell));
    let weights = [
        rng.random_range(0.2..1.0),
        rng.random_range(0.1..0.8),
        rng.random_range(0.2..1.0),
    ];

    let white: Vec<f32> = (0..size * size).map(|_| rng.random_range(0.0f32..1.0)).collect();
    let noise = gaussian_blur(
        &GrayImage::new(size, size, white).expect("uniform noise in range"),
        rng.random_range(1.5..5.0),
    );
    let (lo, hi) = noise
        .pixels()
        .iter()
        .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-6) as f64;

    let mut field = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
            let gradient = 0.5 + 0.5 * ((u - 0.5) * dx + (v - 0.5) * dy) * std::f64::consts::SQRT_2;
            let checker =
                ((((x as f64 + shift.0) / cell).floor() + ((y as f64 + shift.1) / cell).floor()) as i64 & 1) as f64;
            let band = (noise.get(x, y) as f64 - lo as f64) / span;
            field.push(weights[0] * gradient + weights[1] * checker + weights[2] * band);
        }
    }
    let (lo, hi) = field
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let px = field
        .iter()
        .map(|v| {
            let n = 0.05 + 0.9 * (v - lo) / (hi - lo).max(1e-9);
            ((n * 255.0).round() / 255.0) as f32
        })
        .collect();
    GrayImage::new(size, size, px).expect("normalized field in range")
}

/// Path of a distorted image inside the synthetic tree.
pub fn distorted_path(root: &Path, family: Distortion, level: usize, ref_id: &str) -> PathBuf {
    root.join("dist")
        .join(family.name())
        .join(level.to_string())
        .join(format!("{ref_id}.png"))
}

/// Writes `refs/`, `dist/<family>/<level>/` and `manifest.csv` under `out_dir`.
///
/// Produces `n_refs * 3 * levels` samples.
pub fn synth_generate(out_dir: &Path, n_refs: usize, levels: usize, rng: &mut impl Rng) -> Result<Manifest> {
    if n_refs == 0 || levels == 0 {
        return Err(Error::Config(format!(
            "synthetic dataset needs at least one reference and one level (got {n_refs}, {levels})"
        )));
    }
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&out_dir.join("refs"))?;
    for family in Distortion::ALL {
        for level in 0..levels {
            mkdir(&out_dir.join("dist").join(family.name()).join(level.to_string()))?;
        }
    }
    let mut samples = Vec::with_capacity(n_refs * levels * 3);
    for i in 0..n_refs {
        let ref_id = format!("ref_{i:03}");
        let reference = render_reference(SYNTH_SIZE, rng);
        let ref_path = out_dir.join("refs").join(format!("{ref_id}.png"));
        reference.save(&ref_path)?;
        for family in Distortion::ALL {
            for level in 0..levels {
                let t = Distortion::magnitude(level, levels);
                let dist = family.apply(&reference, t, rng);
                let path = distorted_path(out_dir, family, level, &ref_id);
                dist.save(&path)?;
                samples.push(Sample {
                    dist_path: path,
                    ref_path: ref_path.clone(),
                    score: pseudo_mos(level, levels),
                    ref_id: ref_id.clone(),
                });
            }
        }
    }
    let manifest = Manifest::new(samples);
    manifest.save(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
