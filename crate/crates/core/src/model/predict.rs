use crate::data::{crops_to_tensor, grid_anchors, GrayImage, ImagePair};
use crate::error::{Error, Result};
use crate::numerics::{f, Real};

use super::Model;

/// Patches evaluated per forward call during whole-image prediction.
const PREDICT_BATCH: usize = 16;

impl<T: Real> Model<T> {
    /// Eval-mode score of every test-grid patch, in row-major grid order.
    pub fn patch_scores(&self, distorted: &GrayImage, residual: &GrayImage) -> Result<Vec<f64>> {
        if !distorted.same_size(residual) {
            return Err(Error::Input(format!(
                "distorted {}x{} and residual {}x{} are not aligned",
                distorted.width(),
                distorted.height(),
                residual.width(),
                residual.height()
            )));
        }
        let p = self.config().patch_size;
        let anchors = grid_anchors(distorted.width(), distorted.height(), p)?;
        let mut scores = Vec::with_capacity(anchors.len());
        for chunk in anchors.chunks(PREDICT_BATCH) {
            let d = crops_to_tensor::<T>(distorted, chunk, p);
            let r = crops_to_tensor::<T>(residual, chunk, p);
            scores.extend(self.forward_eval(&d, &r)?.data().iter().map(|&s| f(s)));
        }
        Ok(scores)
    }

    /// Whole-image score: the mean of the per-patch scores over the test grid.
    pub fn predict_image(&self, distorted: &GrayImage, residual: &GrayImage) -> Result<f64> {
        let scores = self.patch_scores(distorted, residual)?;
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }

    pub fn predict_pair(&self, pair: &ImagePair) -> Result<f64> {
        self.predict_image(&pair.distorted, &pair.residual)
    }
}

#[cfg(test)]
mod tests {
    use crate::data::residual_map;
    use crate::model::ModelConfig;
    use crate::numerics::Tensor;

    use super::*;

    fn image(w: usize, h: usize, k: f32) -> GrayImage {
        GrayImage::new(w, h, (0..w * h).map(|i| (i as f32 * k).sin() * 0.5 + 0.5).collect()).unwrap()
    }

    #[test]
    fn one_patch_image_equals_patch_score() {
        let m = Model::<f32>::build(ModelConfig::slim()).unwrap();
        let (d, o) = (image(64, 64, 0.01), image(64, 64, 0.02));
        let r = residual_map(&d, &o).unwrap();
        let to_t = |g: &GrayImage| Tensor::<f32>::from_vec(&[1, 1, 64, 64], g.pixels().to_vec()).unwrap();
        let direct = m.forward_eval(&to_t(&d), &to_t(&r)).unwrap().data()[0] as f64;
        assert_eq!(m.predict_image(&d, &r).unwrap(), direct);
    }

    #[test]
    fn grid_count_and_mean() {
        let m = Model::<f32>::build(ModelConfig::slim()).unwrap();
        let (d, o) = (image(192, 130, 0.003), image(192, 130, 0.005));
        let r = residual_map(&d, &o).unwrap();
        let scores = m.patch_scores(&d, &r).unwrap();
        assert_eq!(scores.len(), 3 * 2);
        let mean = scores.iter().sum::<f64>() / 6.0;
        assert_eq!(m.predict_image(&d, &r).unwrap(), mean);
    }

    #[test]
    fn undersized_image_rejected() {
        let m = Model::<f32>::build(ModelConfig::slim()).unwrap();
        let small = image(63, 100, 0.1);
        assert!(m.predict_image(&small, &small).is_err());
    }
}
