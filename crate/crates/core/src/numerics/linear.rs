use rand::Rng;

use crate::error::{Error, Result};

use super::{init_bias, init_weights, Real, Tensor};

/// Fully connected layer, `y = W x + b` per batch row.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: init_weights(&[outputs, inputs], inputs, rng),
            bias: init_bias(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check(&self, op: &'static str, input: &Tensor<T>) -> Result<usize> {
        match *input.shape() {
            [b, n] if n == self.inputs() => Ok(b),
            _ => Err(Error::shape(
                op,
                format!("input {:?} but layer expects [B, {}]", input.shape(), self.inputs()),
            )),
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check("linear_forward", input)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let mut out = Tensor::zeros(&[batch, n_out]);
        for row in out.data_mut().chunks_exact_mut(n_out) {
            row.copy_from_slice(self.bias.data());
        }
        T::gemm(
            batch,
            n_in,
            n_out,
            T::one(),
            input.data(),
            n_in as isize,
            1,
            self.weight.data(),
            1,
            n_in as isize,
            T::one(),
            out.data_mut(),
            n_out as isize,
            1,
        );
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LinearGrads<T>> {
        let batch = self.check("linear_backward", input)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if grad_out.shape() != [batch, n_out] {
            return Err(Error::shape(
                "linear_backward",
                format!("grad_out {:?} != [{batch}, {n_out}]", grad_out.shape()),
            ));
        }
        let mut grad_in = Tensor::zeros(input.shape());
        T::gemm(
            batch,
            n_out,
            n_in,
            T::one(),
            grad_out.data(),
            n_out as isize,
            1,
            self.weight.data(),
            n_in as isize,
            1,
            T::zero(),
            grad_in.data_mut(),
            n_in as isize,
            1,
        );
        let mut grad_w = Tensor::zeros(self.weight.shape());
        T::gemm(
            n_out,
            batch,
            n_in,
            T::one(),
            grad_out.data(),
            1,
            n_out as isize,
            input.data(),
            n_in as isize,
            1,
            T::zero(),
            grad_w.data_mut(),
            n_in as isize,
            1,
        );
        let mut grad_b = Tensor::zeros(self.bias.shape());
        for row in grad_out.data().chunks_exact(n_out) {
            for (g, &d) in grad_b.data_mut().iter_mut().zip(row) {
                *g += d;
            }
        }
        Ok(LinearGrads {
            input: grad_in,
            weight: grad_w,
            bias: grad_b,
        })
    }
}
