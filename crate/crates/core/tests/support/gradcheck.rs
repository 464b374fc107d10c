//! Central-difference gradient checks in 64-bit arithmetic.
//!
//! Every layer is reduced to the scalar objective `L = sum(proj * output)` with a
//! fixed random projection, so the analytic gradient is the layer backward pass
//! applied to `proj`.

use piqa_core::model::{Model, ModelConfig, Variant};
use piqa_core::numerics::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step for single layers.
pub const STEP: f64 = 1e-6;
/// Step for the end-to-end model, near the round-off optimum `eps^(1/3)`: a
/// dozen stacked layers put ~1e-16 relative noise on the score, which a 1e-6
/// step would amplify past the tolerance for the smallest gradient entries.
pub const MODEL_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
/// Entries probed per tensor; smaller tensors are checked exhaustively.
pub const PROBES: usize = 24;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Forces the borrow signature a tensor accessor closure needs.
pub fn slot<S, F: Fn(&mut S) -> &mut Tensor<f64>>(f: F) -> F {
    f
}

/// Relative gap between one-sided slopes above which a failing probe is taken
/// to straddle a kink (a max-pool argmax switch) rather than a wrong gradient.
pub const KINK: f64 = 1e-3;

/// Largest relative error between `analytic` and central differences of `loss`
/// over sampled entries of the tensor that `get` selects inside `state`, or
/// `None` when a probe lands on a point where the loss is not differentiable.
pub fn probe<S>(
    state: &mut S,
    get: impl Fn(&mut S) -> &mut Tensor<f64>,
    loss: &mut impl FnMut(&mut S) -> f64,
    analytic: &Tensor<f64>,
    rng: &mut impl Rng,
) -> Option<f64> {
    probe_with_step(state, get, loss, analytic, STEP, rng)
}

pub fn probe_with_step<S>(
    state: &mut S,
    get: impl Fn(&mut S) -> &mut Tensor<f64>,
    loss: &mut impl FnMut(&mut S) -> f64,
    analytic: &Tensor<f64>,
    step: f64,
    rng: &mut impl Rng,
) -> Option<f64> {
    let len = get(state).len();
    assert_eq!(len, analytic.len(), "gradient/parameter size mismatch");
    let picks: Vec<usize> = if len <= PROBES {
        (0..len).collect()
    } else {
        sample(rng, len, PROBES).into_vec()
    };
    let center = loss(state);
    let mut worst: f64 = 0.0;
    for i in picks {
        let orig = get(state).data()[i];
        get(state).data_mut()[i] = orig + step;
        let up = loss(state);
        get(state).data_mut()[i] = orig - step;
        let down = loss(state);
        get(state).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = rel_err(analytic.data()[i], numeric);
        if err >= TOLERANCE {
            let (fwd, bwd) = ((up - center) / step, (center - down) / step);
            if (fwd - bwd).abs() > KINK * fwd.abs().max(bwd.abs()).max(1e-8) {
                return None;
            }
        }
        worst = worst.max(err);
    }
    Some(worst)
}

/// Plain-input check for stateless layers.
fn probe_input(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut loss: impl FnMut(&Tensor<f64>) -> f64,
    rng: &mut impl Rng,
) -> Option<f64> {
    let mut x = x.clone();
    probe(&mut x, |t| t, &mut |t: &mut Tensor<f64>| loss(t), analytic, rng)
}

pub fn conv(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = [1, 3, 5][rng.random_range(0..3)];
    let (b, c, o) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
    let (h, w) = (rng.random_range(3..8), rng.random_range(3..8));
    let mut layer = Conv2d::<f64>::new(c, o, k, &mut rng);
    // odd seeds exercise the bias-free variant used inside the streams
    layer.bias = seed.is_multiple_of(2).then(|| uniform(&[o], -0.5, 0.5, &mut rng));
    let x = uniform(&[b, c, h, w], -1.0, 1.0, &mut rng);
    let proj = uniform(&[b, o, h, w], -1.0, 1.0, &mut rng);
    let g = layer.backward(&x, &proj).unwrap();
    let mut worst = probe_input(&x, &g.input, |x| dot(&layer.forward(x).unwrap(), &proj), &mut rng)?;
    let mut state = (layer, x);
    let mut loss = |s: &mut (Conv2d<f64>, Tensor<f64>)| dot(&s.0.forward(&s.1).unwrap(), &proj);
    type S = (Conv2d<f64>, Tensor<f64>);
    worst = worst.max(probe(
        &mut state,
        slot(|s: &mut S| &mut s.0.weight),
        &mut loss,
        &g.weight,
        &mut rng,
    )?);
    if let Some(gb) = &g.bias {
        worst = worst.max(probe(
            &mut state,
            slot(|s: &mut S| s.0.bias.as_mut().unwrap()),
            &mut loss,
            gb,
            &mut rng,
        )?);
    }
    Some(worst)
}

pub fn batchnorm(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, c) = (rng.random_range(2..4), rng.random_range(1..4));
    let (h, w) = (rng.random_range(2..5), rng.random_range(2..5));
    let mut bn = BatchNorm2d::<f64>::new(c);
    bn.gamma = uniform(&[c], 0.5, 1.5, &mut rng);
    bn.beta = uniform(&[c], -0.5, 0.5, &mut rng);
    let x = uniform(&[b, c, h, w], -2.0, 2.0, &mut rng);
    let proj = uniform(&[b, c, h, w], -1.0, 1.0, &mut rng);
    let (_, cache) = bn.clone().forward_train(&x).unwrap();
    let g = bn.backward(&cache, &proj).unwrap();
    let mut state = (bn, x);
    let mut loss = |s: &mut (BatchNorm2d<f64>, Tensor<f64>)| {
        let x = s.1.clone();
        dot(&s.0.forward_train(&x).unwrap().0, &proj)
    };
    type S = (BatchNorm2d<f64>, Tensor<f64>);
    let mut worst = probe(&mut state, slot(|s: &mut S| &mut s.1), &mut loss, &g.input, &mut rng)?;
    worst = worst.max(probe(
        &mut state,
        slot(|s: &mut S| &mut s.0.gamma),
        &mut loss,
        &g.gamma,
        &mut rng,
    )?);
    Some(worst.max(probe(
        &mut state,
        slot(|s: &mut S| &mut s.0.beta),
        &mut loss,
        &g.beta,
        &mut rng,
    )?))
}

pub fn elu_layer(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EluConfig::default();
    // keep samples clear of the kink at zero
    let x = uniform(&[2, 3, 4, 4], -3.0, 3.0, &mut rng).map(|v| if v.abs() < 1e-3 { v + 2e-3 } else { v });
    let proj = uniform(x.shape(), -1.0, 1.0, &mut rng);
    let g = elu_backward(&x, &proj, cfg);
    probe_input(&x, &g, |x| dot(&elu(x, cfg), &proj), &mut rng)
}

/// Distinct values at least 1e-2 apart, so probes never flip an argmax.
pub fn separated(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 1e-2 - 0.5).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v).unwrap()
}

pub fn maxpool(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (2 * rng.random_range(1..4), 2 * rng.random_range(1..4));
    let x = separated(&[2, 2, h, w], &mut rng);
    let (y, cache) = maxpool2x2(&x).unwrap();
    let proj = uniform(y.shape(), -1.0, 1.0, &mut rng);
    let g = maxpool2x2_backward(&cache, &proj).unwrap();
    probe_input(&x, &g, |x| dot(&maxpool2x2(x).unwrap().0, &proj), &mut rng)
}

pub fn spp(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bins, lcm) =
        [(vec![1, 2], 2), (vec![1, 2, 4], 4), (vec![1, 3], 3), (vec![2, 4], 4)][rng.random_range(0..4)].clone();
    let (h, w) = (lcm * rng.random_range(1..3), lcm * rng.random_range(1..3));
    let x = uniform(&[2, 2, h, w], -1.0, 1.0, &mut rng);
    let y = spp_forward(&x, &bins).unwrap();
    let proj = uniform(y.shape(), -1.0, 1.0, &mut rng);
    let g = spp_backward(x.shape(), &bins, &proj).unwrap();
    probe_input(&x, &g, |x| dot(&spp_forward(x, &bins).unwrap(), &proj), &mut rng)
}

pub fn fpn(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = [rng.random_range(1..3), rng.random_range(1..3), rng.random_range(1..4)];
    let out = rng.random_range(1..4);
    let s = rng.random_range(1..3);
    let mut net = Fpn::<f64>::new(ch, out, &mut rng);
    for c in net.convs_mut() {
        c.bias = Some(uniform(&[c.out_channels()], -0.3, 0.3, &mut rng));
    }
    let b = 2;
    let c3 = uniform(&[b, ch[0], 4 * s, 4 * s], -1.0, 1.0, &mut rng);
    let c4 = uniform(&[b, ch[1], 2 * s, 2 * s], -1.0, 1.0, &mut rng);
    let c5 = uniform(&[b, ch[2], s, s], -1.0, 1.0, &mut rng);
    let (y, cache) = net.forward(&c3, &c4, &c5).unwrap();
    let proj = uniform(y.shape(), -1.0, 1.0, &mut rng);
    let (gi, gp) = net.backward(&cache, &proj).unwrap();

    type S = (Fpn<f64>, [Tensor<f64>; 3]);
    let mut state: S = (net, [c3, c4, c5]);
    let mut loss = |s: &mut S| dot(&s.0.forward(&s.1[0], &s.1[1], &s.1[2]).unwrap().0, &proj);
    let mut worst: f64 = 0.0;
    for (i, g) in [&gi.c3, &gi.c4, &gi.c5].into_iter().enumerate() {
        worst = worst.max(probe(&mut state, |s: &mut S| &mut s.1[i], &mut loss, g, &mut rng)?);
    }
    for (i, g) in gp.convs().into_iter().enumerate() {
        worst = worst.max(probe(
            &mut state,
            |s: &mut S| &mut s.0.convs_mut()[i].weight,
            &mut loss,
            &g.weight,
            &mut rng,
        )?);
        let gb = g.bias.as_ref().unwrap();
        worst = worst.max(probe(
            &mut state,
            |s: &mut S| s.0.convs_mut()[i].bias.as_mut().unwrap(),
            &mut loss,
            gb,
            &mut rng,
        )?);
    }
    Some(worst)
}

pub fn linear(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, i, o) = (rng.random_range(1..5), rng.random_range(1..12), rng.random_range(1..6));
    let mut layer = Linear::<f64>::new(i, o, &mut rng);
    layer.bias = uniform(&[o], -0.5, 0.5, &mut rng);
    let x = uniform(&[b, i], -1.0, 1.0, &mut rng);
    let proj = uniform(&[b, o], -1.0, 1.0, &mut rng);
    let g = layer.backward(&x, &proj).unwrap();
    type S = (Linear<f64>, Tensor<f64>);
    let mut state: S = (layer, x);
    let mut loss = |s: &mut S| dot(&s.0.forward(&s.1).unwrap(), &proj);
    let mut worst = probe(&mut state, slot(|s: &mut S| &mut s.1), &mut loss, &g.input, &mut rng)?;
    worst = worst.max(probe(
        &mut state,
        slot(|s: &mut S| &mut s.0.weight),
        &mut loss,
        &g.weight,
        &mut rng,
    )?);
    Some(worst.max(probe(
        &mut state,
        slot(|s: &mut S| &mut s.0.bias),
        &mut loss,
        &g.bias,
        &mut rng,
    )?))
}

/// Slim end-to-end model in train mode, every parameter tensor.
/// The variant cycles with the seed so all four architectures get covered.
pub fn model(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variant = Variant::ALL[seed as usize % Variant::ALL.len()];
    let cfg = ModelConfig {
        seed,
        ..ModelConfig::slim()
    }
    .with_variant(variant);
    let p = cfg.patch_size;
    let mut net = Model::<f64>::build(cfg).unwrap();
    let d = uniform(&[2, 1, p, p], 0.0, 1.0, &mut rng);
    let r = uniform(&[2, 1, p, p], 0.0, 0.3, &mut rng);
    let proj = uniform(&[2], -1.0, 1.0, &mut rng);
    let (_, cache) = net.forward_train(&d, &r).unwrap();
    let grads = net.backward(&cache, &proj).unwrap();

    type S = (Model<f64>, Tensor<f64>, Tensor<f64>);
    let mut state: S = (net, d, r);
    let mut loss = |s: &mut S| {
        let (d, r) = (s.1.clone(), s.2.clone());
        dot(&s.0.forward_train(&d, &r).unwrap().0, &proj)
    };
    let mut worst: f64 = 0.0;
    for (i, g) in grads.tensors.iter().enumerate() {
        let get = slot(move |s: &mut S| s.0.params_mut().swap_remove(i));
        worst = worst.max(probe_with_step(&mut state, get, &mut loss, g, MODEL_STEP, &mut rng)?);
    }
    Some(worst)
}

pub type Check = fn(u64) -> Option<f64>;

pub const LAYERS: [(&str, Check); 8] = [
    ("conv", conv),
    ("batchnorm", batchnorm),
    ("elu", elu_layer),
    ("maxpool", maxpool),
    ("spp", spp),
    ("fpn", fpn),
    ("linear", linear),
    ("slim model", model),
];

/// Differentiable instances required per layer.
pub const INSTANCES: usize = 10;

#[derive(Debug)]
pub struct Outcome {
    pub worst: f64,
    pub worst_seed: u64,
    pub checked: usize,
    /// Seeds whose instance sat on a non-differentiable point.
    pub skipped: Vec<u64>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checked >= INSTANCES && self.worst < TOLERANCE
    }
}

/// Consecutive seeds from 0 until [`INSTANCES`] differentiable instances are
/// checked, giving up after three times that many draws.
pub fn run(check: Check) -> Outcome {
    let mut out = Outcome {
        worst: 0.0,
        worst_seed: 0,
        checked: 0,
        skipped: Vec::new(),
    };
    for seed in 0..(3 * INSTANCES) as u64 {
        if out.checked == INSTANCES {
            break;
        }
        match check(seed) {
            Some(err) => {
                out.checked += 1;
                if err >= out.worst {
                    out.worst = err;
                    out.worst_seed = seed;
                }
            }
            None => out.skipped.push(seed),
        }
    }
    out
}
