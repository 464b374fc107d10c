use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::numerics::{r, Real, Tensor};

use super::GrayImage;

/// How patch anchors are chosen.
pub enum PatchMode<'a> {
    /// `count` uniformly random top-left anchors.
    Train { count: usize, rng: &'a mut dyn RngCore },
    /// Non-overlapping grid anchored at the top-left; remainders are dropped.
    TestGrid,
}

/// Aligned distorted/residual crops sharing one anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub x: usize,
    pub y: usize,
    pub distorted: GrayImage,
    pub residual: GrayImage,
}

fn check_size(width: usize, height: usize, patch: usize) -> Result<()> {
    if patch == 0 || width < patch || height < patch {
        return Err(Error::Input(format!(
            "{width}x{height} image is smaller than the {patch}x{patch} patch"
        )));
    }
    Ok(())
}

/// Top-left corners of the non-overlapping test grid, row by row.
pub fn grid_anchors(width: usize, height: usize, patch: usize) -> Result<Vec<(usize, usize)>> {
    check_size(width, height, patch)?;
    let (nx, ny) = (width / patch, height / patch);
    Ok((0..ny)
        .flat_map(|gy| (0..nx).map(move |gx| (gx * patch, gy * patch)))
        .collect())
}

pub fn random_anchors(
    width: usize,
    height: usize,
    patch: usize,
    count: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<(usize, usize)>> {
    check_size(width, height, patch)?;
    Ok((0..count)
        .map(|_| {
            let x = rng.random_range(0..=width - patch);
            let y = rng.random_range(0..=height - patch);
            (x, y)
        })
        .collect())
}

pub fn extract_patches(
    distorted: &GrayImage,
    residual: &GrayImage,
    patch: usize,
    mode: PatchMode<'_>,
) -> Result<Vec<PatchPair>> {
    if !distorted.same_size(residual) {
        return Err(Error::Input(format!(
            "distorted {}x{} and residual {}x{} differ in size",
            distorted.width(),
            distorted.height(),
            residual.width(),
            residual.height()
        )));
    }
    let (w, h) = (distorted.width(), distorted.height());
    let anchors = match mode {
        PatchMode::Train { count, rng } => random_anchors(w, h, patch, count, rng)?,
        PatchMode::TestGrid => grid_anchors(w, h, patch)?,
    };
    anchors
        .into_iter()
        .map(|(x, y)| {
            Ok(PatchPair {
                x,
                y,
                distorted: distorted.crop(x, y, patch, patch)?,
                residual: residual.crop(x, y, patch, patch)?,
            })
        })
        .collect()
}

/// Writes the `patch x patch` window at `(x, y)` into `out`.
pub(crate) fn copy_window<T: Real>(img: &GrayImage, x: usize, y: usize, patch: usize, out: &mut [T]) {
    let w = img.width();
    for row in 0..patch {
        let src = &img.pixels()[(y + row) * w + x..(y + row) * w + x + patch];
        for (d, &s) in out[row * patch..(row + 1) * patch].iter_mut().zip(src) {
            *d = r(s as f64);
        }
    }
}

/// Stacks crops at `anchors` into `[B, 1, patch, patch]` tensors.
pub fn crops_to_tensor<T: Real>(img: &GrayImage, anchors: &[(usize, usize)], patch: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[anchors.len(), 1, patch, patch]);
    let area = patch * patch;
    for (i, &(x, y)) in anchors.iter().enumerate() {
        copy_window(img, x, y, patch, &mut t.data_mut()[i * area..(i + 1) * area]);
    }
    t
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::residual_map;

    fn ramp(w: usize, h: usize, phase: f32) -> GrayImage {
        let px = (0..w * h)
            .map(|i| ((i as f32 * 0.013 + phase).sin() * 0.5 + 0.5).clamp(0.0, 1.0))
            .collect();
        GrayImage::new(w, h, px).unwrap()
    }

    #[test]
    fn grid_counts() {
        assert_eq!(grid_anchors(128, 128, 128).unwrap(), vec![(0, 0)]);
        let g = grid_anchors(384, 256, 128).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[1], (128, 0));
        assert_eq!(grid_anchors(300, 200, 128).unwrap().len(), 2);
        assert!(grid_anchors(127, 300, 128).is_err());
    }

    #[test]
    fn crops_commute_with_residual() {
        let d = ramp(200, 150, 0.0);
        let o = ramp(200, 150, 0.7);
        let res = residual_map(&d, &o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = extract_patches(
            &d,
            &res,
            64,
            PatchMode::Train {
                count: 20,
                rng: &mut rng,
            },
        )
        .unwrap();
        assert_eq!(pairs.len(), 20);
        for p in pairs {
            let expect = residual_map(&d.crop(p.x, p.y, 64, 64).unwrap(), &o.crop(p.x, p.y, 64, 64).unwrap()).unwrap();
            assert_eq!(p.residual, expect);
            assert_eq!(p.distorted, d.crop(p.x, p.y, 64, 64).unwrap());
        }
    }

    #[test]
    fn undersized_images_rejected() {
        let small = GrayImage::filled(100, 200, 0.5);
        assert!(extract_patches(&small, &small, 128, PatchMode::TestGrid).is_err());
    }

    #[test]
    fn tensor_layout_matches_crop() {
        let img = ramp(20, 10, 0.3);
        let t: Tensor<f32> = crops_to_tensor(&img, &[(3, 2), (0, 0)], 4);
        assert_eq!(t.shape(), &[2, 1, 4, 4]);
        assert_eq!(&t.data()[..16], img.crop(3, 2, 4, 4).unwrap().pixels());
    }
}
