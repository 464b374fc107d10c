use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{concat_features, split_features};
use crate::numerics::{
    elu, elu_backward, maxpool2x2, maxpool2x2_backward, spp_backward, spp_forward, BatchNorm2d, BnCache, Conv2d,
    EluConfig, Fpn, FpnCache, Linear, PoolCache, Real, Tensor,
};

use super::config::{ModelConfig, POOLED_BLOCKS};

/// Whether batch normalization uses batch statistics (and updates running ones).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Bias-free 3x3 convolution followed by batch normalization; ELU and pooling are applied by the stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

/// Five conv blocks; 2x2 max-pooling follows the first four.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream<T> {
    pub blocks: Vec<ConvBlock<T>>,
}

/// Post-activation, pre-pool outputs of conv3, conv4 and conv5.
struct StreamOutput<T> {
    taps: [Tensor<T>; 3],
}

struct BlockCache<T> {
    input: Tensor<T>,
    bn: BnCache<T>,
    pre_activation: Tensor<T>,
    pool: Option<PoolCache>,
}

/// Per head layer: its input, and its pre-activation output.
type HeadCache<T> = (Vec<Tensor<T>>, Vec<Tensor<T>>);

struct StreamCache<T> {
    blocks: Vec<BlockCache<T>>,
    top_shape: Vec<usize>,
}

impl<T: Real> Stream<T> {
    fn new(channels: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut in_ch = 1;
        let blocks = channels
            .iter()
            .map(|&out| {
                let block = ConvBlock {
                    conv: Conv2d::new(in_ch, out, 3, rng).without_bias(),
                    bn: BatchNorm2d::new(out),
                };
                in_ch = out;
                block
            })
            .collect();
        Self { blocks }
    }

    fn forward_eval(&self, x: &Tensor<T>, act: EluConfig) -> Result<StreamOutput<T>> {
        let mut h = x.clone();
        let mut taps = Vec::with_capacity(3);
        for (i, block) in self.blocks.iter().enumerate() {
            let z = block.bn.forward_eval(&block.conv.forward(&h)?)?;
            let a = elu(&z, act);
            if i >= 2 {
                taps.push(a.clone());
            }
            h = if i < POOLED_BLOCKS { maxpool2x2(&a)?.0 } else { a };
        }
        Ok(StreamOutput {
            taps: taps.try_into().expect("three taps"),
        })
    }

    fn forward_train(&mut self, x: &Tensor<T>, act: EluConfig) -> Result<(StreamOutput<T>, StreamCache<T>)> {
        let mut h = x.clone();
        let mut taps = Vec::with_capacity(3);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let c = block.conv.forward(&h)?;
            let (z, bn) = block.bn.forward_train(&c)?;
            let a = elu(&z, act);
            if i >= 2 {
                taps.push(a.clone());
            }
            let (next, pool) = if i < POOLED_BLOCKS {
                let (p, cache) = maxpool2x2(&a)?;
                (p, Some(cache))
            } else {
                (a, None)
            };
            caches.push(BlockCache {
                input: std::mem::replace(&mut h, next),
                bn,
                pre_activation: z,
                pool,
            });
        }
        let top_shape = h.shape().to_vec();
        Ok((
            StreamOutput {
                taps: taps.try_into().expect("three taps"),
            },
            StreamCache {
                blocks: caches,
                top_shape,
            },
        ))
    }

    /// `tap_grads` are upstream gradients on the conv3/conv4/conv5 activations.
    /// Pushes `[conv.w, bn.gamma, bn.beta]` per block onto `out`.
    fn backward(
        &self,
        cache: &StreamCache<T>,
        mut tap_grads: [Option<Tensor<T>>; 3],
        act: EluConfig,
        out: &mut Vec<Tensor<T>>,
    ) -> Result<()> {
        let n = self.blocks.len();
        let mut per_block: Vec<[Tensor<T>; 3]> = Vec::with_capacity(n);
        let mut grad: Option<Tensor<T>> = None;
        for i in (0..n).rev() {
            let block = &self.blocks[i];
            let bc = &cache.blocks[i];
            // gradient on this block's post-ELU activation
            let mut g_act = match (&bc.pool, grad.take()) {
                (Some(pool), Some(g)) => maxpool2x2_backward(pool, &g)?,
                (None, Some(g)) => g,
                (_, None) => Tensor::zeros(bc.pre_activation.shape()),
            };
            if i >= 2 {
                if let Some(t) = tap_grads[i - 2].take() {
                    g_act.add_assign(&t);
                }
            }
            let g_z = elu_backward(&bc.pre_activation, &g_act, act);
            let bn = block.bn.backward(&bc.bn, &g_z)?;
            let conv = block.conv.backward(&bc.input, &bn.input)?;
            grad = Some(conv.input);
            per_block.push([conv.weight, bn.gamma, bn.beta]);
        }
        for grads in per_block.into_iter().rev() {
            out.extend(grads);
        }
        Ok(())
    }
}

/// The assembled quality network.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    pub distorted: Option<Stream<T>>,
    pub residual: Option<Stream<T>>,
    pub fpn: Option<Fpn<T>>,
    pub head: Vec<Linear<T>>,
    generation: u64,
}

// The generation counter is bookkeeping, not model state.
impl<T: PartialEq> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.distorted == other.distorted
            && self.residual == other.residual
            && self.fpn == other.fpn
            && self.head == other.head
    }
}

/// Everything backward needs from one train-mode forward pass.
pub struct ForwardCache<T> {
    mode: Mode,
    generation: u64,
    batch: usize,
    distorted: Option<StreamCache<T>>,
    residual: Option<StreamCache<T>>,
    fpn: Option<FpnCache<T>>,
    /// Inputs to every head layer.
    head_inputs: Vec<Tensor<T>>,
    /// Pre-activation outputs of every hidden head layer.
    head_pre: Vec<Tensor<T>>,
    feature_widths: Vec<usize>,
}

/// Parameter gradients in [`Model::named_params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

/// A named parameter and whether weight decay applies to it.
pub struct ParamRef<'a, T> {
    pub name: String,
    pub tensor: &'a Tensor<T>,
    pub decay: bool,
}

impl<T: Real> Model<T> {
    /// Builds and initializes a network; identical configs give identical weights.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let v = config.variant;
        let distorted = v.has_distorted().then(|| Stream::new(&config.conv_channels, &mut rng));
        let residual = v.has_residual().then(|| Stream::new(&config.conv_channels, &mut rng));
        let fpn = v.has_fpn().then(|| {
            let c = &config.conv_channels;
            Fpn::new([c[2], c[3], c[4]], config.fpn_channels, &mut rng)
        });
        let mut width = config.head_input_width();
        let head = config
            .fc_sizes
            .iter()
            .map(|&out| {
                let layer = Linear::new(width, out, &mut rng);
                width = out;
                layer
            })
            .collect();
        Ok(Self {
            config,
            distorted,
            residual,
            fpn,
            head,
            generation: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn act(&self) -> EluConfig {
        EluConfig {
            alpha: self.config.elu_alpha,
        }
    }

    /// Trainable parameters in a fixed order: distorted stream, residual stream,
    /// feature pyramid, head.
    pub fn named_params(&self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        let mut push = |name: String, tensor, decay| out.push(ParamRef { name, tensor, decay });
        for (prefix, stream) in [("distorted", &self.distorted), ("residual", &self.residual)] {
            if let Some(s) = stream {
                for (i, b) in s.blocks.iter().enumerate() {
                    let p = format!("{prefix}.conv{}", i + 1);
                    push(format!("{p}.weight"), &b.conv.weight, true);
                    push(format!("{p}.bn.gamma"), &b.bn.gamma, false);
                    push(format!("{p}.bn.beta"), &b.bn.beta, false);
                }
            }
        }
        if let Some(fpn) = &self.fpn {
            let names = ["lateral3", "lateral4", "lateral5", "smooth3", "smooth4", "smooth5"];
            for (name, conv) in names.iter().zip(fpn.convs()) {
                push(format!("fpn.{name}.weight"), &conv.weight, true);
                if let Some(b) = &conv.bias {
                    push(format!("fpn.{name}.bias"), b, false);
                }
            }
        }
        for (i, l) in self.head.iter().enumerate() {
            push(format!("fc{}.weight", i + 1), &l.weight, true);
            push(format!("fc{}.bias", i + 1), &l.bias, false);
        }
        out
    }

    /// Mutable parameters in [`Model::named_params`] order. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params_and_buffers_mut().0
    }

    /// Batch-norm running statistics, named like the parameters.
    pub fn named_buffers(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, stream) in [("distorted", &self.distorted), ("residual", &self.residual)] {
            if let Some(s) = stream {
                for (i, b) in s.blocks.iter().enumerate() {
                    let p = format!("{prefix}.conv{}.bn", i + 1);
                    out.push((format!("{p}.running_mean"), &b.bn.running_mean));
                    out.push((format!("{p}.running_var"), &b.bn.running_var));
                }
            }
        }
        out
    }

    /// Parameters and running statistics, in the orders of [`Model::named_params`]
    /// and [`Model::named_buffers`]. Invalidates outstanding caches.
    pub fn params_and_buffers_mut(&mut self) -> (Vec<&mut Tensor<T>>, Vec<&mut Tensor<T>>) {
        self.generation += 1;
        let mut params: Vec<&mut Tensor<T>> = Vec::new();
        let mut buffers: Vec<&mut Tensor<T>> = Vec::new();
        for s in [&mut self.distorted, &mut self.residual].into_iter().flatten() {
            for b in &mut s.blocks {
                let BatchNorm2d {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    ..
                } = &mut b.bn;
                params.extend([&mut b.conv.weight, gamma, beta]);
                buffers.extend([running_mean, running_var]);
            }
        }
        if let Some(fpn) = &mut self.fpn {
            for conv in fpn.convs_mut() {
                params.push(&mut conv.weight);
                params.extend(conv.bias.as_mut());
            }
        }
        for l in &mut self.head {
            params.extend([&mut l.weight, &mut l.bias]);
        }
        (params, buffers)
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|p| p.tensor.len()).sum()
    }

    fn check_inputs(&self, d: &Tensor<T>, r: &Tensor<T>) -> Result<usize> {
        let p = self.config.patch_size;
        let check = |t: &Tensor<T>, what: &str| -> Result<usize> {
            match *t.shape() {
                [b, 1, h, w] if h == p && w == p && b > 0 => Ok(b),
                _ => Err(Error::shape(
                    "model_forward",
                    format!("{what} patches {:?}, expected [B, 1, {p}, {p}]", t.shape()),
                )),
            }
        };
        let v = self.config.variant;
        match (v.has_distorted(), v.has_residual()) {
            (true, true) => {
                let (bd, br) = (check(d, "distorted")?, check(r, "residual")?);
                if bd != br {
                    return Err(Error::shape(
                        "model_forward",
                        format!("batch sizes differ: {bd} vs {br}"),
                    ));
                }
                Ok(bd)
            }
            (true, false) => check(d, "distorted"),
            _ => check(r, "residual"),
        }
    }

    /// Runs the head on concatenated features; returns scores `[B]`, then each layer's input and pre-activation.
    fn head_forward(&self, features: Tensor<T>) -> Result<(Tensor<T>, HeadCache<T>)> {
        let act = self.act();
        let mut inputs = Vec::with_capacity(self.head.len());
        let mut pre = Vec::with_capacity(self.head.len());
        let mut h = features;
        let last = self.head.len() - 1;
        for (i, layer) in self.head.iter().enumerate() {
            let z = layer.forward(&h)?;
            inputs.push(h);
            h = if i < last {
                let a = elu(&z, act);
                pre.push(z);
                a
            } else {
                z
            };
        }
        let batch = h.shape()[0];
        Ok((h.reshape(&[batch])?, (inputs, pre)))
    }

    /// Eval-mode scores for a batch of aligned patches. Read-only.
    pub fn forward_eval(&self, d: &Tensor<T>, r: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_inputs(d, r)?;
        let act = self.act();
        let bins = &self.config.spp_bins;
        let mut parts = Vec::new();
        let mut fpn_out = None;
        if let Some(s) = &self.distorted {
            let out = s.forward_eval(d, act)?;
            parts.push(spp_forward(&out.taps[2], bins)?);
            if let Some(fpn) = &self.fpn {
                fpn_out = Some(fpn.forward(&out.taps[0], &out.taps[1], &out.taps[2])?.0);
            }
        }
        if let Some(s) = &self.residual {
            let out = s.forward_eval(r, act)?;
            parts.push(spp_forward(&out.taps[2], bins)?);
        }
        parts.extend(fpn_out);
        let refs: Vec<&Tensor<T>> = parts.iter().collect();
        Ok(self.head_forward(concat_features(&refs))?.0)
    }

    /// Train-mode forward: batch statistics, running-stat updates, and a cache for [`Model::backward`].
    pub fn forward_train(&mut self, d: &Tensor<T>, r: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let batch = self.check_inputs(d, r)?;
        let act = self.act();
        let bins = self.config.spp_bins.clone();
        let mut parts = Vec::new();
        let mut d_cache = None;
        let mut r_cache = None;
        let mut fpn_part = None;
        if let Some(s) = &mut self.distorted {
            let (out, cache) = s.forward_train(d, act)?;
            parts.push(spp_forward(&out.taps[2], &bins)?);
            if let Some(fpn) = &self.fpn {
                fpn_part = Some(fpn.forward(&out.taps[0], &out.taps[1], &out.taps[2])?);
            }
            d_cache = Some(cache);
        }
        if let Some(s) = &mut self.residual {
            let (out, cache) = s.forward_train(r, act)?;
            parts.push(spp_forward(&out.taps[2], &bins)?);
            r_cache = Some(cache);
        }
        let fpn_cache = fpn_part.map(|(out, cache)| {
            parts.push(out);
            cache
        });
        let feature_widths = parts.iter().map(|p| p.shape()[1]).collect();
        let refs: Vec<&Tensor<T>> = parts.iter().collect();
        let (scores, (head_inputs, head_pre)) = self.head_forward(concat_features(&refs))?;
        Ok((
            scores,
            ForwardCache {
                mode: Mode::Train,
                generation: self.generation,
                batch,
                distorted: d_cache,
                residual: r_cache,
                fpn: fpn_cache,
                head_inputs,
                head_pre,
                feature_widths,
            },
        ))
    }

    /// Dispatches on `mode`. Eval-mode caches cannot be used for backward.
    pub fn forward(&mut self, d: &Tensor<T>, r: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ForwardCache<T>)> {
        match mode {
            Mode::Train => self.forward_train(d, r),
            Mode::Eval => {
                let scores = self.forward_eval(d, r)?;
                let batch = scores.len();
                Ok((
                    scores,
                    ForwardCache {
                        mode: Mode::Eval,
                        generation: self.generation,
                        batch,
                        distorted: None,
                        residual: None,
                        fpn: None,
                        head_inputs: Vec::new(),
                        head_pre: Vec::new(),
                        feature_widths: Vec::new(),
                    },
                ))
            }
        }
    }

    /// Gradients of `sum(grad_scores * scores)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_scores: &Tensor<T>) -> Result<Gradients<T>> {
        if cache.mode != Mode::Train {
            return Err(Error::StaleCache("cache comes from an eval-mode forward pass"));
        }
        if cache.generation != self.generation {
            return Err(Error::StaleCache("parameters changed after the forward pass"));
        }
        if grad_scores.shape() != [cache.batch] {
            return Err(Error::shape(
                "model_backward",
                format!("grad_scores {:?} != [{}]", grad_scores.shape(), cache.batch),
            ));
        }
        let act = self.act();

        // head, last layer first
        let mut head_grads = Vec::with_capacity(self.head.len());
        let mut g = grad_scores.clone().reshape(&[cache.batch, 1])?;
        for i in (0..self.head.len()).rev() {
            if i < self.head.len() - 1 {
                g = elu_backward(&cache.head_pre[i], &g, act);
            }
            let lg = self.head[i].backward(&cache.head_inputs[i], &g)?;
            g = lg.input;
            head_grads.push([lg.weight, lg.bias]);
        }

        let mut parts = split_features(&g, &cache.feature_widths).into_iter();
        let bins = &self.config.spp_bins;
        let spp_grad = |c: &StreamCache<T>, p: Tensor<T>| spp_backward(&c.top_shape, bins, &p);

        let mut tensors = Vec::new();
        let d_spp = match &cache.distorted {
            Some(c) => Some(spp_grad(c, parts.next().expect("distorted features"))?),
            None => None,
        };
        let r_spp = match &cache.residual {
            Some(c) => Some(spp_grad(c, parts.next().expect("residual features"))?),
            None => None,
        };
        let fpn_grads = match (&self.fpn, &cache.fpn) {
            (Some(fpn), Some(fc)) => Some(fpn.backward(fc, &parts.next().expect("fpn features"))?),
            _ => None,
        };

        if let (Some(s), Some(c)) = (&self.distorted, &cache.distorted) {
            let mut top = d_spp.expect("distorted spp gradient");
            let mut taps = [None, None, None];
            if let Some((inputs, _)) = &fpn_grads {
                top.add_assign(&inputs.c5);
                taps[0] = Some(inputs.c3.clone());
                taps[1] = Some(inputs.c4.clone());
            }
            taps[2] = Some(top);
            s.backward(c, taps, act, &mut tensors)?;
        }
        if let (Some(s), Some(c)) = (&self.residual, &cache.residual) {
            s.backward(c, [None, None, r_spp], act, &mut tensors)?;
        }
        if let Some((_, params)) = fpn_grads {
            for conv in params.convs() {
                tensors.push(conv.weight.clone());
                tensors.extend(conv.bias.clone());
            }
        }
        for [w, b] in head_grads.into_iter().rev() {
            tensors.push(w);
            tensors.push(b);
        }
        Ok(Gradients { tensors })
    }

    pub(crate) fn set_generation(&mut self, generation: u64) {
        self.generation = generation;
    }
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Self {
            tensors: model
                .named_params()
                .iter()
                .map(|p| Tensor::zeros(p.tensor.shape()))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.tensors.iter().fold(T::zero(), |m, t| m.max(t.max_abs()))
    }
}
