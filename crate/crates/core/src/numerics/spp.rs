use crate::error::{Error, Result};

use super::{r, Real, Tensor};

/// Feature width produced by [`spp_forward`] for `channels` input maps.
pub fn spp_width(bins: &[usize], channels: usize) -> usize {
    bins.iter().map(|b| b * b).sum::<usize>() * channels
}

fn check(op: &'static str, h: usize, w: usize, bins: &[usize]) -> Result<()> {
    if bins.is_empty() {
        return Err(Error::shape(op, "no pyramid levels"));
    }
    for &n in bins {
        if n == 0 || !h.is_multiple_of(n) || !w.is_multiple_of(n) {
            return Err(Error::shape(
                op,
                format!("{h}x{w} map is not divisible into {n}x{n} bins"),
            ));
        }
    }
    Ok(())
}

/// Spatial pyramid average pooling: `[B, C, H, W] -> [B, sum(n^2) * C]`.
///
/// Per sample the layout is level-major, then channel, then cell in
/// row-major order.
pub fn spp_forward<T: Real>(input: &Tensor<T>, bins: &[usize]) -> Result<Tensor<T>> {
    let (batch, ch, h, w) = input.dims4("spp_forward")?;
    check("spp_forward", h, w, bins)?;
    let width = spp_width(bins, ch);
    let mut out = Tensor::zeros(&[batch, width]);
    let x = input.data();
    for b in 0..batch {
        let mut o = b * width;
        for &n in bins {
            let (ch_h, ch_w) = (h / n, w / n);
            let inv = r::<T>(1.0 / (ch_h * ch_w) as f64);
            for c in 0..ch {
                let plane = &x[(b * ch + c) * h * w..(b * ch + c + 1) * h * w];
                for cy in 0..n {
                    for cx in 0..n {
                        let mut acc = T::zero();
                        for y in cy * ch_h..(cy + 1) * ch_h {
                            acc += plane[y * w + cx * ch_w..y * w + (cx + 1) * ch_w]
                                .iter()
                                .copied()
                                .sum::<T>();
                        }
                        out.data_mut()[o] = acc * inv;
                        o += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Spreads each cell gradient uniformly over its cell.
pub fn spp_backward<T: Real>(input_shape: &[usize], bins: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [batch, ch, h, w] = *input_shape else {
        return Err(Error::shape("spp_backward", format!("bad input shape {input_shape:?}")));
    };
    check("spp_backward", h, w, bins)?;
    let width = spp_width(bins, ch);
    if grad_out.shape() != [batch, width] {
        return Err(Error::shape(
            "spp_backward",
            format!("grad_out {:?} != [{batch}, {width}]", grad_out.shape()),
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    for b in 0..batch {
        let mut o = b * width;
        for &n in bins {
            let (ch_h, ch_w) = (h / n, w / n);
            let inv = r::<T>(1.0 / (ch_h * ch_w) as f64);
            for c in 0..ch {
                let base = (b * ch + c) * h * w;
                for cy in 0..n {
                    for cx in 0..n {
                        let g = grad_out.data()[o] * inv;
                        o += 1;
                        for y in cy * ch_h..(cy + 1) * ch_h {
                            let row = base + y * w + cx * ch_w;
                            for v in &mut grad.data_mut()[row..row + ch_w] {
                                *v += g;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}
