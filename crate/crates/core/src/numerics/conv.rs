use rand::Rng;

use crate::error::{Error, Result};

use super::{init_bias, init_weights, Real, Tensor};

/// Stride-1 "same" convolution with an odd square kernel.
///
/// The backbone uses 3x3 kernels; the feature-pyramid laterals use 1x1.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    /// `[out_ch, in_ch, k, k]`
    pub weight: Tensor<T>,
    /// `[out_ch]`; absent when a normalization layer follows.
    pub bias: Option<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        Self {
            weight: init_weights(&[out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel, rng),
            bias: Some(init_bias(out_ch)),
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn check_input(&self, op: &'static str, input: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (b, c, h, w) = input.dims4(op)?;
        if c != self.in_channels() {
            return Err(Error::shape(
                op,
                format!(
                    "input has {c} channels, layer expects {} (input shape {:?})",
                    self.in_channels(),
                    input.shape()
                ),
            ));
        }
        Ok((b, h, w))
    }

    /// `input [B, C, H, W] -> [B, K, H, W]`
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, h, w) = self.check_input("conv2d_forward", input)?;
        let (k_out, c_in, ks) = (self.out_channels(), self.in_channels(), self.kernel());
        let hw = h * w;
        let patch = c_in * ks * ks;
        let mut out = Tensor::zeros(&[batch, k_out, h, w]);
        let mut col = vec![T::zero(); patch * hw];
        for b in 0..batch {
            let x = &input.data()[b * c_in * hw..(b + 1) * c_in * hw];
            let cols: &[T] = if ks == 1 {
                x
            } else {
                im2col(x, c_in, h, w, ks, &mut col);
                &col
            };
            let y = &mut out.data_mut()[b * k_out * hw..(b + 1) * k_out * hw];
            if let Some(bias) = &self.bias {
                for (row, &v) in y.chunks_exact_mut(hw).zip(bias.data()) {
                    row.fill(v);
                }
            }
            T::gemm(
                k_out,
                patch,
                hw,
                T::one(),
                self.weight.data(),
                patch as isize,
                1,
                cols,
                hw as isize,
                1,
                T::one(),
                y,
                hw as isize,
                1,
            );
        }
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        let (batch, h, w) = self.check_input("conv2d_backward", input)?;
        let (k_out, c_in, ks) = (self.out_channels(), self.in_channels(), self.kernel());
        let expected = [batch, k_out, h, w];
        if grad_out.shape() != expected {
            return Err(Error::shape(
                "conv2d_backward",
                format!("grad_out {:?} != output {:?}", grad_out.shape(), expected),
            ));
        }
        let hw = h * w;
        let patch = c_in * ks * ks;
        let mut grad_w = Tensor::zeros(self.weight.shape());
        let mut grad_b = self.bias.as_ref().map(|b| Tensor::zeros(b.shape()));
        let mut grad_in = Tensor::zeros(input.shape());
        let mut col = vec![T::zero(); patch * hw];
        let mut dcol = vec![T::zero(); patch * hw];
        for b in 0..batch {
            let x = &input.data()[b * c_in * hw..(b + 1) * c_in * hw];
            let dy = &grad_out.data()[b * k_out * hw..(b + 1) * k_out * hw];
            if let Some(gb) = &mut grad_b {
                for (g, row) in gb.data_mut().iter_mut().zip(dy.chunks_exact(hw)) {
                    *g += row.iter().copied().sum::<T>();
                }
            }
            let cols: &[T] = if ks == 1 {
                x
            } else {
                im2col(x, c_in, h, w, ks, &mut col);
                &col
            };
            // dW += dY * cols^T
            T::gemm(
                k_out,
                hw,
                patch,
                T::one(),
                dy,
                hw as isize,
                1,
                cols,
                1,
                hw as isize,
                T::one(),
                grad_w.data_mut(),
                patch as isize,
                1,
            );
            let dx = &mut grad_in.data_mut()[b * c_in * hw..(b + 1) * c_in * hw];
            // dcols = W^T * dY
            let target: &mut [T] = if ks == 1 { dx } else { &mut dcol };
            T::gemm(
                patch,
                k_out,
                hw,
                T::one(),
                self.weight.data(),
                1,
                patch as isize,
                dy,
                hw as isize,
                1,
                T::zero(),
                target,
                hw as isize,
                1,
            );
            if ks != 1 {
                col2im(&dcol, c_in, h, w, ks, dx);
            }
        }
        Ok(ConvGrads {
            input: grad_in,
            weight: grad_w,
            bias: grad_b,
        })
    }
}

/// Unfolds one `[C, H, W]` image into `[C*k*k, H*W]` zero-padded columns.
fn im2col<T: Real>(x: &[T], c_in: usize, h: usize, w: usize, ks: usize, col: &mut [T]) {
    let pad = (ks / 2) as isize;
    let hw = h * w;
    for c in 0..c_in {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..ks {
            for kx in 0..ks {
                let row = (c * ks + ky) * ks + kx;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad;
                let dy = ky as isize - pad;
                // valid output columns for this horizontal offset
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out_row = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out_row[..x0].fill(T::zero());
                    out_row[x1..].fill(T::zero());
                    let s0 = (x0 as isize + dx) as usize;
                    out_row[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back into `dx`.
fn col2im<T: Real>(col: &[T], c_in: usize, h: usize, w: usize, ks: usize, dx: &mut [T]) {
    let pad = (ks / 2) as isize;
    let hw = h * w;
    dx.fill(T::zero());
    for c in 0..c_in {
        let plane = &mut dx[c * hw..(c + 1) * hw];
        for ky in 0..ks {
            for kx in 0..ks {
                let row = (c * ks + ky) * ks + kx;
                let src = &col[row * hw..(row + 1) * hw];
                let dx_off = kx as isize - pad;
                let dy_off = ky as isize - pad;
                let x0 = (-dx_off).max(0) as usize;
                let x1 = (w as isize - dx_off).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy_off;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x0 as isize + dx_off) as usize;
                    let dst = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    for (d, &g) in dst.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct six-fold loop with explicit zero padding.
    fn naive_conv(x: &Tensor<f64>, layer: &Conv2d<f64>) -> Tensor<f64> {
        let (bn, c, h, w) = x.dims4("naive").unwrap();
        let (k, ks) = (layer.out_channels(), layer.kernel());
        let p = (ks / 2) as isize;
        let mut out = Tensor::zeros(&[bn, k, h, w]);
        for b in 0..bn {
            for o in 0..k {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = layer.bias.as_ref().map_or(0.0, |b| b.data()[o]);
                        for ci in 0..c {
                            for ky in 0..ks {
                                for kx in 0..ks {
                                    let sy = y as isize + ky as isize - p;
                                    let sx = xx as isize + kx as isize - p;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    acc += layer.weight.data()[((o * c + ci) * ks + ky) * ks + kx]
                                        * x.data()[((b * c + ci) * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                        out.data_mut()[((b * k + o) * h + y) * w + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Conv2d::<f64>::new(1, 1, 3, &mut rng);
        layer.weight.fill(0.0);
        layer.weight.data_mut()[4] = 1.0;
        let x = random(&[2, 1, 6, 5], &mut rng);
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn output_shape_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = Conv2d::<f32>::new(1, 8, 3, &mut rng);
        let x = Tensor::<f32>::zeros(&[2, 1, 128, 128]);
        assert_eq!(layer.forward(&x).unwrap().shape(), &[2, 8, 128, 128]);
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for ks in [1, 3] {
            let layer = Conv2d::<f64>::new(2, 3, ks, &mut rng);
            let x = random(&[1, 2, 5, 5], &mut rng);
            let fast = layer.forward(&x).unwrap();
            let slow = naive_conv(&x, &layer);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = Conv2d::<f32>::new(2, 3, 3, &mut rng);
        let err = layer.forward(&Tensor::zeros(&[1, 3, 4, 4])).unwrap_err();
        assert!(err.to_string().contains("3 channels"), "{err}");
        let g = Tensor::zeros(&[1, 2, 4, 4]);
        assert!(layer.backward(&Tensor::zeros(&[1, 2, 4, 4]), &g).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = Conv2d::<f64>::new(2, 3, 3, &mut rng);
        let x = random(&[2, 2, 4, 4], &mut rng);
        let g = layer.backward(&x, &Tensor::zeros(&[2, 3, 4, 4])).unwrap();
        assert_eq!(g.input.max_abs(), 0.0);
        assert_eq!(g.weight.max_abs(), 0.0);
        assert_eq!(g.bias.unwrap().max_abs(), 0.0);
    }

    #[test]
    fn bias_gradient_sums_batch_and_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layer = Conv2d::<f64>::new(1, 2, 3, &mut rng);
        let x = random(&[3, 1, 4, 4], &mut rng);
        let dy = random(&[3, 2, 4, 4], &mut rng);
        let g = layer.backward(&x, &dy).unwrap();
        for k in 0..2 {
            let expect: f64 = (0..3)
                .flat_map(|b| dy.data()[(b * 2 + k) * 16..(b * 2 + k + 1) * 16].iter())
                .sum();
            assert!((g.bias.as_ref().unwrap().data()[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_free_layer_matches_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = Conv2d::<f64>::new(2, 3, 3, &mut rng);
        let bare = layer.clone().without_bias();
        let x = random(&[2, 2, 5, 5], &mut rng);
        assert_eq!(layer.forward(&x).unwrap(), bare.forward(&x).unwrap());
        let dy = random(&[2, 3, 5, 5], &mut rng);
        let (g, gb) = (layer.backward(&x, &dy).unwrap(), bare.backward(&x, &dy).unwrap());
        assert!(gb.bias.is_none());
        assert_eq!(g.input, gb.input);
        assert_eq!(g.weight, gb.weight);
    }
}
