//! Full-reference image quality assessment with a two-stream multi-scale CNN.
//!
//! The network sees aligned patches of a distorted image and of its residual map
//! against the reference, pools each stream with a spatial pyramid, adds a
//! feature pyramid over the distorted stream and regresses a scalar score.
//! Everything runs on the small tensor engine in [`numerics`].

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod optim;

pub use data::{GrayImage, Manifest, Sample};
pub use error::{CheckpointError, Error, Result};

pub use model::{Model, ModelConfig, Variant};
pub use numerics::{EluConfig, Real, Tensor};

pub use eval::EvalReport;
pub use optim::TrainConfig;
