use super::{r, Real, Tensor};

/// Exponential linear unit: `x` for `x >= 0`, `alpha * (exp(x) - 1)` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EluConfig {
    pub alpha: f64,
}

impl Default for EluConfig {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

pub fn elu<T: Real>(input: &Tensor<T>, cfg: EluConfig) -> Tensor<T> {
    let alpha = r::<T>(cfg.alpha);
    input.map(|x| {
        if x >= T::zero() {
            x
        } else {
            alpha * (x.exp() - T::one())
        }
    })
}

/// Backward pass given the forward input.
pub fn elu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>, cfg: EluConfig) -> Tensor<T> {
    assert_eq!(input.shape(), grad_out.shape(), "elu_backward shape mismatch");
    let alpha = r::<T>(cfg.alpha);
    let mut g = grad_out.clone();
    for (d, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x < T::zero() {
            *d *= alpha * x.exp();
        }
    }
    g
}
