//! Squared-error loss, SGD with momentum and weight decay, and the training loop.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{random_anchors, ImagePair, Manifest};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{f, r, Real, Tensor};

/// Optimization hyperparameters. Defaults are the full-scale training setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patches_per_image: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-7,
            batch_size: 128,
            epochs: 100,
            patches_per_image: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            ));
        }
        if self.epochs == 0 || self.patches_per_image == 0 {
            return bad("epochs and patches_per_image must be positive".into());
        }
        Ok(())
    }
}

/// Mean squared error `(1/B) sum (pred - target)^2` and its gradient `2 (pred - target) / B`.
pub fn l2_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() || pred.rank() != 1 {
        return Err(Error::shape(
            "l2_loss",
            format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = f(p) - f(t);
        loss += d * d;
        *g = r(2.0 * d / n);
    }
    Ok((loss / n, grad))
}

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState<T> {
    pub velocity: Vec<Tensor<T>>,
}

impl<T: Real> SgdState<T> {
    pub fn new(shapes: impl IntoIterator<Item = Vec<usize>>) -> Self {
        Self {
            velocity: shapes.into_iter().map(|s| Tensor::zeros(&s)).collect(),
        }
    }

    pub fn for_model(model: &Model<T>) -> Self {
        Self::new(model.named_params().iter().map(|p| p.tensor.shape().to_vec()))
    }
}

/// `v = momentum * v + (g + wd * w)`, `w = w - lr * v`; weight decay only where `decay[i]`.
pub fn sgd_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    decay: &[bool],
    grads: &[Tensor<T>],
    state: &mut SgdState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() || params.len() != decay.len() {
        return Err(Error::shape(
            "sgd_step",
            format!(
                "{} params, {} grads, {} velocity buffers, {} decay flags",
                params.len(),
                grads.len(),
                state.velocity.len(),
                decay.len()
            ),
        ));
    }
    for (i, ((w, g), v)) in params.iter().zip(grads).zip(&state.velocity).enumerate() {
        if w.shape() != g.shape() || w.shape() != v.shape() {
            return Err(Error::shape(
                "sgd_step",
                format!(
                    "tensor {i}: param {:?}, grad {:?}, velocity {:?}",
                    w.shape(),
                    g.shape(),
                    v.shape()
                ),
            ));
        }
    }
    let (lr, mom) = (r::<T>(cfg.learning_rate), r::<T>(cfg.momentum));
    for (((w, g), v), &dec) in params.iter_mut().zip(grads).zip(&mut state.velocity).zip(decay) {
        let wd = if dec { r::<T>(cfg.weight_decay) } else { T::zero() };
        for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = mom * *vi + (gi + wd * *wi);
            *wi -= lr * *vi;
        }
    }
    Ok(())
}

/// Applies one SGD update to every model parameter.
pub fn sgd_step_model<T: Real>(
    model: &mut Model<T>,
    grads: &crate::model::Gradients<T>,
    state: &mut SgdState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    let decay: Vec<bool> = model.named_params().iter().map(|p| p.decay).collect();
    let mut params = model.params_mut();
    sgd_step(&mut params, &decay, &grads.tensors, state, cfg)
}

/// A training image with its subjective score.
#[derive(Clone, Debug)]
pub struct LabeledPair {
    pub pair: ImagePair,
    pub score: f64,
}

/// Loads every manifest entry into memory.
pub fn load_training_set(manifest: &Manifest) -> Result<Vec<LabeledPair>> {
    manifest
        .samples
        .iter()
        .map(|s| {
            Ok(LabeledPair {
                pair: ImagePair::load(s)?,
                score: s.score,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

/// Per-step training losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    pub rows: Vec<LossRow>,
}

impl LossLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,step,loss\n");
        for r in &self.rows {
            writeln!(s, "{},{},{}", r.epoch, r.step, r.loss).expect("write to string");
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("epoch,step,loss") {
            return Err(Error::Input("loss log must start with \"epoch,step,loss\"".into()));
        }
        let rows = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let bad = || Error::Input(format!("loss log row {}: {l:?}", i + 1));
                let mut it = l.split(',');
                let mut next = || it.next().map(str::trim).ok_or_else(bad);
                let epoch = next()?.parse().map_err(|_| bad())?;
                let step = next()?.parse().map_err(|_| bad())?;
                let loss = next()?.parse().map_err(|_| bad())?;
                Ok(LossRow { epoch, step, loss })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    /// Mean loss per epoch, in epoch order.
    pub fn epoch_means(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some((e, sum, n)) if *e == r.epoch => {
                    *sum += r.loss;
                    *n += 1;
                }
                _ => out.push((r.epoch, r.loss, 1)),
            }
        }
        out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
    }
}

/// Progress report passed to the training callback after each epoch.
#[derive(Clone, Copy, Debug)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

/// Trains with no progress callback. See [`train_with`].
pub fn train<T: Real>(model: &mut Model<T>, set: &[LabeledPair], cfg: &TrainConfig) -> Result<LossLog> {
    train_with(model, set, cfg, |_| {})
}

/// Epoch loop: random aligned crops per image, shuffled, mini-batch SGD.
///
/// A trailing batch with fewer than two patches is dropped. Crop sampling and
/// shuffling draw from one generator seeded by `cfg.seed`.
pub fn train_with<T: Real>(
    model: &mut Model<T>,
    set: &[LabeledPair],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<LossLog> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let p = model.config().patch_size;
    let usable: Vec<usize> = (0..set.len())
        .filter(|&i| {
            let d = &set[i].pair.distorted;
            d.width() >= p && d.height() >= p
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::Input(format!("no training image is at least {p}x{p}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SgdState::for_model(model);
    let mut log = LossLog::default();
    let area = p * p;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let mut crops: Vec<(usize, usize, usize)> = Vec::with_capacity(usable.len() * cfg.patches_per_image);
        for &i in &usable {
            let d = &set[i].pair.distorted;
            for (x, y) in random_anchors(d.width(), d.height(), p, cfg.patches_per_image, &mut rng)? {
                crops.push((i, x, y));
            }
        }
        crops.shuffle(&mut rng);

        let (mut epoch_loss, mut epoch_steps) = (0.0, 0);
        for batch in crops.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let b = batch.len();
            let mut d = Tensor::<T>::zeros(&[b, 1, p, p]);
            let mut rt = Tensor::<T>::zeros(&[b, 1, p, p]);
            let mut target = Tensor::<T>::zeros(&[b]);
            for (k, &(i, x, y)) in batch.iter().enumerate() {
                let item = &set[i];
                crate::data::copy_window(
                    &item.pair.distorted,
                    x,
                    y,
                    p,
                    &mut d.data_mut()[k * area..(k + 1) * area],
                );
                crate::data::copy_window(
                    &item.pair.residual,
                    x,
                    y,
                    p,
                    &mut rt.data_mut()[k * area..(k + 1) * area],
                );
                target.data_mut()[k] = r(item.score);
            }
            let (scores, cache) = model.forward_train(&d, &rt)?;
            let (loss, grad) = l2_loss(&scores, &target)?;
            if !loss.is_finite() {
                return Err(Error::Input(format!(
                    "training diverged at epoch {epoch}, step {}: loss {loss}",
                    step + 1
                )));
            }
            let grads = model.backward(&cache, &grad)?;
            drop(cache);
            sgd_step_model(model, &grads, &mut state, cfg)?;
            step += 1;
            epoch_loss += loss;
            epoch_steps += 1;
            log.rows.push(LossRow { epoch, step, loss });
        }
        on_epoch(&EpochSummary {
            epoch,
            steps: epoch_steps,
            mean_loss: epoch_loss / epoch_steps.max(1) as f64,
        });
    }
    Ok(log)
}
