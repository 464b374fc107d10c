use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

/// Single-channel luminance image with pixels in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Input(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Input(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("valid constant image")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn same_size(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copies the `w x h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::Input(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for row in y..y + h {
            pixels.extend_from_slice(&self.pixels[row * self.width + x..row * self.width + x + w]);
        }
        Ok(GrayImage {
            width: w,
            height: h,
            pixels,
        })
    }

    /// Luminance of a decoded image, see [`rgb_to_luminance`].
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        rgb_to_luminance(img)
    }

    /// Decodes a PNG/PGM/PPM file into luminance.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        })?;
        Ok(rgb_to_luminance(&img))
    }

    /// Rounds to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Writes an 8-bit grayscale image; the format follows the extension (`.png`, `.pgm`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = ImageFormat::from_path(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_u8())
            .expect("buffer matches dimensions");
        buf.save_with_format(path, format).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        })
    }
}

/// `Y = (0.299 R + 0.587 G + 0.114 B) / 255`; grayscale input is only rescaled.
pub fn rgb_to_luminance(img: &DynamicImage) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => img
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|v| (v as f64 / 255.0) as f32)
            .collect(),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => img
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| (v as f64 / 65535.0) as f32)
            .collect(),
        _ => img
            .to_rgb8()
            .pixels()
            .map(|p| {
                let y = LUMA_WEIGHTS.iter().zip(p.0).map(|(wt, c)| wt * c as f64).sum::<f64>() / 255.0;
                y.clamp(0.0, 1.0) as f32
            })
            .collect(),
    };
    GrayImage {
        width: w,
        height: h,
        pixels,
    }
}

/// Pixelwise absolute difference `|d - o|`.
pub fn residual_map(distorted: &GrayImage, reference: &GrayImage) -> Result<GrayImage> {
    if !distorted.same_size(reference) {
        return Err(Error::Input(format!(
            "residual map needs equal sizes, got {}x{} and {}x{}",
            distorted.width, distorted.height, reference.width, reference.height
        )));
    }
    Ok(GrayImage {
        width: distorted.width,
        height: distorted.height,
        pixels: distorted
            .pixels
            .iter()
            .zip(&reference.pixels)
            .map(|(a, b)| (a - b).abs())
            .collect(),
    })
}
