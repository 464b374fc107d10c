use rand::Rng;

use crate::error::{Error, Result};

use super::{r, Conv2d, ConvGrads, Real, Tensor};

/// 2x nearest-neighbour upsampling: each cell becomes a 2x2 block.
pub fn upsample2x<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = input.dims4("upsample2x")?;
    let mut out = Tensor::zeros(&[b, c, 2 * h, 2 * w]);
    let ow = 2 * w;
    for plane in 0..b * c {
        let src = &input.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out.data_mut()[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for y in 0..2 * h {
            for x in 0..ow {
                dst[y * ow + x] = src[(y / 2) * w + x / 2];
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample2x`]: sums each 2x2 block.
pub fn upsample2x_backward<T: Real>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h2, w2) = grad_out.dims4("upsample2x_backward")?;
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::shape("upsample2x_backward", format!("odd extent {h2}x{w2}")));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut grad = Tensor::zeros(&[b, c, h, w]);
    for plane in 0..b * c {
        let src = &grad_out.data()[plane * h2 * w2..(plane + 1) * h2 * w2];
        let dst = &mut grad.data_mut()[plane * h * w..(plane + 1) * h * w];
        for y in 0..h2 {
            for x in 0..w2 {
                dst[(y / 2) * w + x / 2] += src[y * w2 + x];
            }
        }
    }
    Ok(grad)
}

/// Three-level feature pyramid over the distorted-stream backbone taps.
///
/// Level 5 (coarsest) gets a 1x1 lateral; levels 4 and 3 add the 2x upsampled
/// merged map from the level above to their own lateral. Every merged map is
/// smoothed by a 3x3 convolution and globally average pooled. The output is
/// `[P3 | P4 | P5]`, `3 * channels` features per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Fpn<T> {
    pub lateral3: Conv2d<T>,
    pub lateral4: Conv2d<T>,
    pub lateral5: Conv2d<T>,
    pub smooth3: Conv2d<T>,
    pub smooth4: Conv2d<T>,
    pub smooth5: Conv2d<T>,
}

#[derive(Clone, Debug)]
pub struct FpnCache<T> {
    c3: Tensor<T>,
    c4: Tensor<T>,
    c5: Tensor<T>,
    merged3: Tensor<T>,
    merged4: Tensor<T>,
    merged5: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct FpnGrads<T> {
    pub lateral3: ConvGrads<T>,
    pub lateral4: ConvGrads<T>,
    pub lateral5: ConvGrads<T>,
    pub smooth3: ConvGrads<T>,
    pub smooth4: ConvGrads<T>,
    pub smooth5: ConvGrads<T>,
}

/// Gradients with respect to the three backbone taps.
#[derive(Clone, Debug)]
pub struct FpnInputGrads<T> {
    pub c3: Tensor<T>,
    pub c4: Tensor<T>,
    pub c5: Tensor<T>,
}

impl<T: Real> Fpn<T> {
    /// `in_channels` are the channel counts of the conv3, conv4 and conv5 taps.
    pub fn new(in_channels: [usize; 3], channels: usize, rng: &mut impl Rng) -> Self {
        Self {
            lateral3: Conv2d::new(in_channels[0], channels, 1, rng),
            lateral4: Conv2d::new(in_channels[1], channels, 1, rng),
            lateral5: Conv2d::new(in_channels[2], channels, 1, rng),
            smooth3: Conv2d::new(channels, channels, 3, rng),
            smooth4: Conv2d::new(channels, channels, 3, rng),
            smooth5: Conv2d::new(channels, channels, 3, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.lateral5.out_channels()
    }

    pub fn output_width(&self) -> usize {
        3 * self.channels()
    }

    pub fn convs(&self) -> [&Conv2d<T>; 6] {
        [
            &self.lateral3,
            &self.lateral4,
            &self.lateral5,
            &self.smooth3,
            &self.smooth4,
            &self.smooth5,
        ]
    }

    pub fn convs_mut(&mut self) -> [&mut Conv2d<T>; 6] {
        [
            &mut self.lateral3,
            &mut self.lateral4,
            &mut self.lateral5,
            &mut self.smooth3,
            &mut self.smooth4,
            &mut self.smooth5,
        ]
    }

    pub fn forward(&self, c3: &Tensor<T>, c4: &Tensor<T>, c5: &Tensor<T>) -> Result<(Tensor<T>, FpnCache<T>)> {
        let (b3, _, h3, w3) = c3.dims4("fpn_forward")?;
        let (b4, _, h4, w4) = c4.dims4("fpn_forward")?;
        let (b5, _, h5, w5) = c5.dims4("fpn_forward")?;
        if b3 != b4 || b4 != b5 || h3 != 2 * h4 || w3 != 2 * w4 || h4 != 2 * h5 || w4 != 2 * w5 {
            return Err(Error::shape(
                "fpn_forward",
                format!(
                    "taps {:?}, {:?}, {:?} are not in 4:2:1 spatial ratio",
                    c3.shape(),
                    c4.shape(),
                    c5.shape()
                ),
            ));
        }
        let merged5 = self.lateral5.forward(c5)?;
        let mut merged4 = self.lateral4.forward(c4)?;
        merged4.add_assign(&upsample2x(&merged5)?);
        let mut merged3 = self.lateral3.forward(c3)?;
        merged3.add_assign(&upsample2x(&merged4)?);

        let pooled = [
            global_avg_pool(&self.smooth3.forward(&merged3)?),
            global_avg_pool(&self.smooth4.forward(&merged4)?),
            global_avg_pool(&self.smooth5.forward(&merged5)?),
        ];
        let out = super::tensor::concat_features(&[&pooled[0], &pooled[1], &pooled[2]]);
        Ok((
            out,
            FpnCache {
                c3: c3.clone(),
                c4: c4.clone(),
                c5: c5.clone(),
                merged3,
                merged4,
                merged5,
            },
        ))
    }

    pub fn backward(&self, cache: &FpnCache<T>, grad_out: &Tensor<T>) -> Result<(FpnInputGrads<T>, FpnGrads<T>)> {
        let ch = self.channels();
        let batch = cache.c5.shape()[0];
        if grad_out.shape() != [batch, 3 * ch] {
            return Err(Error::shape(
                "fpn_backward",
                format!("grad_out {:?} != [{batch}, {}]", grad_out.shape(), 3 * ch),
            ));
        }
        let parts = super::tensor::split_features(grad_out, &[ch, ch, ch]);
        let smooth3 = self.smooth3.backward(
            &cache.merged3,
            &global_avg_pool_backward(&parts[0], cache.merged3.shape()),
        )?;
        let smooth4 = self.smooth4.backward(
            &cache.merged4,
            &global_avg_pool_backward(&parts[1], cache.merged4.shape()),
        )?;
        let smooth5 = self.smooth5.backward(
            &cache.merged5,
            &global_avg_pool_backward(&parts[2], cache.merged5.shape()),
        )?;

        let d_merged3 = smooth3.input.clone();
        let mut d_merged4 = smooth4.input.clone();
        d_merged4.add_assign(&upsample2x_backward(&d_merged3)?);
        let mut d_merged5 = smooth5.input.clone();
        d_merged5.add_assign(&upsample2x_backward(&d_merged4)?);

        let lateral3 = self.lateral3.backward(&cache.c3, &d_merged3)?;
        let lateral4 = self.lateral4.backward(&cache.c4, &d_merged4)?;
        let lateral5 = self.lateral5.backward(&cache.c5, &d_merged5)?;
        Ok((
            FpnInputGrads {
                c3: lateral3.input.clone(),
                c4: lateral4.input.clone(),
                c5: lateral5.input.clone(),
            },
            FpnGrads {
                lateral3,
                lateral4,
                lateral5,
                smooth3,
                smooth4,
                smooth5,
            },
        ))
    }
}

impl<T: Real> FpnGrads<T> {
    pub fn convs(&self) -> [&ConvGrads<T>; 6] {
        [
            &self.lateral3,
            &self.lateral4,
            &self.lateral5,
            &self.smooth3,
            &self.smooth4,
            &self.smooth5,
        ]
    }
}

fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (b, c, h, w) = x.dims4("global_avg_pool").expect("rank-4 conv output");
    let inv = r::<T>(1.0 / (h * w) as f64);
    let data = x
        .data()
        .chunks_exact(h * w)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(&[b, c], data).expect("one value per plane")
}

fn global_avg_pool_backward<T: Real>(grad: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let hw = shape[2] * shape[3];
    let inv = r::<T>(1.0 / hw as f64);
    let mut out = Tensor::zeros(shape);
    for (plane, &g) in out.data_mut().chunks_exact_mut(hw).zip(grad.data()) {
        plane.fill(g * inv);
    }
    out
}
