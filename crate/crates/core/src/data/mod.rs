//! Image ingestion, residual maps, patches, manifests and synthetic data.

mod image;
mod manifest;
mod patches;
pub mod synth;

pub use self::image::{residual_map, rgb_to_luminance, GrayImage, LUMA_WEIGHTS};
pub use manifest::{split_by_reference, Manifest, Sample, Split, MANIFEST_HEADER};
pub(crate) use patches::copy_window;
pub use patches::{crops_to_tensor, extract_patches, grid_anchors, random_anchors, PatchMode, PatchPair};
pub use synth::{synth_generate, Distortion};

use crate::error::Result;

/// Distorted luminance and its residual map, ready for the network.
#[derive(Clone, Debug)]
pub struct ImagePair {
    pub distorted: GrayImage,
    pub residual: GrayImage,
}

impl ImagePair {
    pub fn from_images(distorted: GrayImage, reference: &GrayImage) -> Result<Self> {
        let residual = residual_map(&distorted, reference)?;
        Ok(Self { distorted, residual })
    }

    pub fn load(sample: &Sample) -> Result<Self> {
        let distorted = GrayImage::load(&sample.dist_path)?;
        let reference = GrayImage::load(&sample.ref_path)?;
        Self::from_images(distorted, &reference)
    }
}
