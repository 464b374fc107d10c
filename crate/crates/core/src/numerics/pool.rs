use crate::error::{Error, Result};

use super::{Real, Tensor};

/// Flat input index of the winning element for every pooled output.
#[derive(Clone, Debug)]
pub struct PoolCache {
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Ties go to the first element in row-major order.
pub fn maxpool2x2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let (b, c, h, w) = input.dims4("maxpool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "maxpool2x2",
            format!("spatial extent {h}x{w} is not even"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = Vec::with_capacity(out.len());
    let x = input.data();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * w + 2 * ox;
                let mut best = i0;
                for i in [i0 + 1, i0 + w, i0 + w + 1] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.data_mut()[(plane * oh + oy) * ow + ox] = x[best];
                argmax.push(best);
            }
        }
    }
    Ok((
        out,
        PoolCache {
            argmax,
            input_shape: input.shape().to_vec(),
        },
    ))
}

pub fn maxpool2x2_backward<T: Real>(cache: &PoolCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::shape(
            "maxpool2x2_backward",
            format!("grad_out {:?} does not match cached pooling", grad_out.shape()),
        ));
    }
    let mut grad = Tensor::zeros(&cache.input_shape);
    for (&i, &g) in cache.argmax.iter().zip(grad_out.data()) {
        grad.data_mut()[i] += g;
    }
    Ok(grad)
}
