use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{GrayImage, ImagePair, Manifest};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::Real;

use super::{logistic_fit, plcc, psnr, srcc, ssim};

/// Correlation summary of predicted against subjective scores.
///
/// SRCC uses the raw predictions; PLCC uses logistic-mapped predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub srcc: f64,
    pub plcc: f64,
    pub beta: [f64; 4],
    /// `[predicted, ground_truth]` per image, in manifest order.
    pub pairs: Vec<[f64; 2]>,
}

impl EvalReport {
    pub fn from_predictions(predicted: &[f64], truth: &[f64]) -> Result<Self> {
        let srcc = srcc(predicted, truth)?;
        let fit = logistic_fit(predicted, truth)?;
        let plcc = plcc(&fit.mapped, truth)?;
        Ok(Self {
            srcc,
            plcc,
            beta: fit.params.0,
            pairs: predicted.iter().zip(truth).map(|(&p, &t)| [p, t]).collect(),
        })
    }

    pub fn predictions(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p[0]).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }
}

/// Predicts every image of `manifest` and correlates against its scores.
pub fn evaluate<T: Real>(model: &Model<T>, manifest: &Manifest) -> Result<EvalReport> {
    let mut predicted = Vec::with_capacity(manifest.len());
    for sample in &manifest.samples {
        let pair = ImagePair::load(sample)?;
        predicted.push(model.predict_pair(&pair)?);
    }
    EvalReport::from_predictions(&predicted, &manifest.scores())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Psnr,
    Ssim,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psnr" => Ok(Metric::Psnr),
            "ssim" => Ok(Metric::Ssim),
            other => Err(Error::Config(format!("unknown metric {other:?} (psnr|ssim)"))),
        }
    }
}

impl Metric {
    pub fn compute(self, distorted: &GrayImage, reference: &GrayImage) -> Result<f64> {
        match self {
            Metric::Psnr => psnr(distorted, reference),
            Metric::Ssim => ssim(distorted, reference),
        }
    }
}

/// Scores every manifest entry with a classical metric and correlates.
pub fn baseline_report(manifest: &Manifest, metric: Metric) -> Result<EvalReport> {
    let mut values = Vec::with_capacity(manifest.len());
    for s in &manifest.samples {
        let d = GrayImage::load(&s.dist_path)?;
        let o = GrayImage::load(&s.ref_path)?;
        values.push(metric.compute(&d, &o)?);
    }
    EvalReport::from_predictions(&values, &manifest.scores())
}
