//! Naive reference implementations, written for clarity over speed.

use piqa_core::numerics::Tensor;
use piqa_core::GrayImage;

/// Direct six-loop same-padded convolution in f64.
pub fn conv(x: &Tensor<f64>, w: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
    let [b, c, h, wd] = x.shape().try_into().unwrap();
    let [o, _, k, _] = w.shape().try_into().unwrap();
    let pad = (k / 2) as isize;
    let mut out = Tensor::zeros(&[b, o, h, wd]);
    for n in 0..b {
        for oc in 0..o {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = bias.data()[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((n * c + ic) * h + sy as usize) * wd + sx as usize];
                                let wv = w.data()[((oc * c + ic) * k + ky) * k + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.data_mut()[((n * o + oc) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    out
}

pub fn maxpool(x: &Tensor<f64>) -> Tensor<f64> {
    let [b, c, h, w] = x.shape().try_into().unwrap();
    let at = |n: usize, ch: usize, y: usize, xx: usize| x.data()[((n * c + ch) * h + y) * w + xx];
    let mut out = Vec::new();
    for n in 0..b {
        for ch in 0..c {
            for y in 0..h / 2 {
                for xx in 0..w / 2 {
                    let m = [
                        at(n, ch, 2 * y, 2 * xx),
                        at(n, ch, 2 * y, 2 * xx + 1),
                        at(n, ch, 2 * y + 1, 2 * xx),
                        at(n, ch, 2 * y + 1, 2 * xx + 1),
                    ]
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                    out.push(m);
                }
            }
        }
    }
    Tensor::from_vec(&[b, c, h / 2, w / 2], out).unwrap()
}

pub fn spp(x: &Tensor<f64>, bins: &[usize]) -> Vec<Vec<f64>> {
    let [b, c, h, w] = x.shape().try_into().unwrap();
    (0..b)
        .map(|n| {
            let mut feats = Vec::new();
            for &lv in bins {
                for ch in 0..c {
                    for cy in 0..lv {
                        for cx in 0..lv {
                            let (mut sum, mut count) = (0.0, 0.0);
                            for y in 0..h {
                                for xx in 0..w {
                                    if y * lv / h == cy && xx * lv / w == cx {
                                        sum += x.data()[((n * c + ch) * h + y) * w + xx];
                                        count += 1.0;
                                    }
                                }
                            }
                            feats.push(sum / count);
                        }
                    }
                }
            }
            feats
        })
        .collect()
}

pub fn psnr(a: &GrayImage, b: &GrayImage) -> f64 {
    let n = a.pixels().len() as f64;
    let mse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        100.0
    } else {
        (-10.0 * mse.log10()).min(100.0)
    }
}

/// SSIM with the full 2-D Gaussian window evaluated at every valid position.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> f64 {
    let (w, h) = (a.width(), a.height());
    let win = 11;
    let g: Vec<f64> = (0..win)
        .map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp())
        .collect();
    let mut kernel = vec![0.0; win * win];
    for y in 0..win {
        for x in 0..win {
            kernel[y * win + x] = g[y] * g[x];
        }
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0.0;
    for oy in 0..=h - win {
        for ox in 0..=w - win {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in 0..win {
                for x in 0..win {
                    let k = kernel[y * win + x];
                    let p = a.get(ox + x, oy + y) as f64;
                    let q = b.get(ox + x, oy + y) as f64;
                    mx += k * p;
                    my += k * q;
                    xx += k * p * p;
                    yy += k * q * q;
                    xy += k * p * q;
                }
            }
            let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    acc / count
}

/// Two-pass Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}
