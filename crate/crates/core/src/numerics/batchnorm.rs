use crate::error::{Error, Result};

use super::{f, r, Real, Tensor};

/// Per-channel batch normalization over `[B, C, H, W]` activations.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    /// Weight of the new batch statistic in the running-average update.
    pub stats_momentum: f64,
}

/// Normalized activations and inverse standard deviations from a train-mode pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Real> BatchNorm2d<T> {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: Self::DEFAULT_EPS,
            stats_momentum: Self::DEFAULT_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, op: &'static str, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (b, c, h, w) = x.dims4(op)?;
        if c != self.channels() {
            return Err(Error::shape(
                op,
                format!("input has {c} channels, layer has {}", self.channels()),
            ));
        }
        Ok((b, c, h * w))
    }

    /// Normalizes by batch statistics and folds them into the running averages.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BnCache<T>)> {
        let (batch, ch, hw) = self.check("batchnorm_forward", x)?;
        let n = batch * hw;
        if n < 2 {
            return Err(Error::shape(
                "batchnorm_forward",
                format!("train mode needs at least 2 values per channel, got {n}"),
            ));
        }
        let mut x_hat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(ch);
        let m = self.stats_momentum;
        for c in 0..ch {
            let plane = |b: usize| &x.data()[(b * ch + c) * hw..(b * ch + c + 1) * hw];
            let mut sum = 0.0;
            for b in 0..batch {
                sum += plane(b).iter().map(|&v| f(v)).sum::<f64>();
            }
            let mean = sum / n as f64;
            let mut sq = 0.0;
            for b in 0..batch {
                sq += plane(b).iter().map(|&v| (f(v) - mean).powi(2)).sum::<f64>();
            }
            let var = sq / n as f64;
            let istd = 1.0 / (var + self.eps).sqrt();
            let (g, be) = (self.gamma.data()[c], self.beta.data()[c]);
            let (mean_t, istd_t) = (r::<T>(mean), r::<T>(istd));
            for b in 0..batch {
                let range = (b * ch + c) * hw..(b * ch + c + 1) * hw;
                for i in range {
                    let xh = (x.data()[i] - mean_t) * istd_t;
                    x_hat.data_mut()[i] = xh;
                    y.data_mut()[i] = g * xh + be;
                }
            }
            inv_std.push(istd_t);
            let unbiased = var * n as f64 / (n - 1) as f64;
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = r::<T>((1.0 - m) * f(*rm) + m * mean);
            let rv = &mut self.running_var.data_mut()[c];
            *rv = r::<T>((1.0 - m) * f(*rv) + m * unbiased);
        }
        Ok((y, BnCache { x_hat, inv_std }))
    }

    /// Normalizes with the running statistics only.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, ch, hw) = self.check("batchnorm_forward", x)?;
        let mut y = x.clone();
        for c in 0..ch {
            let istd = r::<T>(1.0 / (f(self.running_var.data()[c]) + self.eps).sqrt());
            let scale = self.gamma.data()[c] * istd;
            let shift = self.beta.data()[c] - self.running_mean.data()[c] * scale;
            for b in 0..batch {
                for v in &mut y.data_mut()[(b * ch + c) * hw..(b * ch + c + 1) * hw] {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&self, cache: &BnCache<T>, grad_out: &Tensor<T>) -> Result<BnGrads<T>> {
        if grad_out.shape() != cache.x_hat.shape() {
            return Err(Error::shape(
                "batchnorm_backward",
                format!("grad_out {:?} != output {:?}", grad_out.shape(), cache.x_hat.shape()),
            ));
        }
        let (batch, ch, hw) = self.check("batchnorm_backward", grad_out)?;
        let n = (batch * hw) as f64;
        let mut grad_in = Tensor::zeros(grad_out.shape());
        let mut grad_gamma = Tensor::zeros(&[ch]);
        let mut grad_beta = Tensor::zeros(&[ch]);
        for c in 0..ch {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for b in 0..batch {
                let range = (b * ch + c) * hw..(b * ch + c + 1) * hw;
                for (&g, &xh) in grad_out.data()[range.clone()].iter().zip(&cache.x_hat.data()[range]) {
                    sum_g += f(g);
                    sum_gx += f(g) * f(xh);
                }
            }
            grad_beta.data_mut()[c] = r(sum_g);
            grad_gamma.data_mut()[c] = r(sum_gx);
            // dx = gamma * istd / n * (n * g - sum(g) - x_hat * sum(g * x_hat))
            let k = self.gamma.data()[c] * cache.inv_std[c] / r::<T>(n);
            let (sg, sgx, nt) = (r::<T>(sum_g), r::<T>(sum_gx), r::<T>(n));
            for b in 0..batch {
                let range = (b * ch + c) * hw..(b * ch + c + 1) * hw;
                for i in range {
                    let g = grad_out.data()[i];
                    let xh = cache.x_hat.data()[i];
                    grad_in.data_mut()[i] = k * (nt * g - sg - xh * sgx);
                }
            }
        }
        Ok(BnGrads {
            input: grad_in,
            gamma: grad_gamma,
            beta: grad_beta,
        })
    }
}
