//! Inception-style block with horizontal, square, dilated and vertical
//! kernel branches fused by a 1x1 bottleneck, and the WeatherNet model
//! built from five of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, ConvSpec};
use super::tensor::{relu, relu_backward, Tensor4};
use crate::error::{Error, Result};
use crate::image::{Label, LabelImage, RangeImage};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiLaBlockSpec {
    pub in_channels: usize,
    /// Every branch emits this many channels; the concat carries 4x.
    pub width: usize,
}

impl LiLaBlockSpec {
    /// Closed-form parameter count: 60*c*n + 4*n^2 + 5*n (with biases).
    pub fn param_count(&self) -> usize {
        let (c, n) = (self.in_channels, self.width);
        60 * c * n + 4 * n * n + 5 * n
    }

    fn branch_specs(&self) -> [ConvSpec; 4] {
        let (c, n) = (self.in_channels, self.width);
        [
            // vertical-extent 7x3 branch
            ConvSpec::new(c, n, (7, 3)),
            ConvSpec::new(c, n, (3, 3)),
            ConvSpec::dilated(c, n, (3, 3), (2, 2)),
            // horizontal-extent 3x7 branch
            ConvSpec::new(c, n, (3, 7)),
        ]
    }

    fn bottleneck_spec(&self) -> ConvSpec {
        ConvSpec::new(4 * self.width, self.width, (1, 1))
    }
}

#[derive(Debug, Clone)]
pub struct LiLaBlock<T> {
    pub spec: LiLaBlockSpec,
    pub branches: Vec<Conv2d<T>>,
    pub bottleneck: Conv2d<T>,
}

/// Intermediates needed by the backward pass.
pub struct BlockCache<T> {
    branch_pre: Vec<Tensor4<T>>,
    concat_act: Tensor4<T>,
    bottleneck_pre: Tensor4<T>,
}

impl<T: Real> LiLaBlock<T> {
    pub fn init(spec: LiLaBlockSpec, rng: &mut impl Rng) -> Self {
        Self {
            branches: spec.branch_specs().iter().map(|s| Conv2d::init(*s, rng)).collect(),
            bottleneck: Conv2d::init(spec.bottleneck_spec(), rng),
            spec,
        }
    }

    pub fn param_count(&self) -> usize {
        self.branches
            .iter()
            .map(|b| b.spec.param_count())
            .sum::<usize>()
            + self.bottleneck.spec.param_count()
    }

    pub fn forward(&self, input: &Tensor4<T>) -> Result<(Tensor4<T>, BlockCache<T>)> {
        let mut branch_pre = Vec::with_capacity(4);
        let mut branch_act = Vec::with_capacity(4);
        for branch in &self.branches {
            let pre = branch.forward(input)?;
            branch_act.push(relu(&pre));
            branch_pre.push(pre);
        }
        let concat_act = Tensor4::concat_channels(&branch_act.iter().collect::<Vec<_>>())?;
        let bottleneck_pre = self.bottleneck.forward(&concat_act)?;
        let out = relu(&bottleneck_pre);
        Ok((
            out,
            BlockCache {
                branch_pre,
                concat_act,
                bottleneck_pre,
            },
        ))
    }

    /// Returns (grad_input, per-conv gradients in serialization order:
    /// branches then bottleneck, weights before bias).
    pub fn backward(
        &self,
        input: &Tensor4<T>,
        cache: &BlockCache<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, Vec<Vec<T>>)> {
        let n = self.spec.width;
        let grad_bpre = relu_backward(&cache.bottleneck_pre, grad_out);
        let (grad_concat, gw_bottleneck, gb_bottleneck) =
            self.bottleneck.backward(&cache.concat_act, &grad_bpre)?;
        let mut grads: Vec<Vec<T>> = Vec::with_capacity(10);
        let mut grad_input = Tensor4::zeros(input.shape);
        for (i, branch) in self.branches.iter().enumerate() {
            let grad_act = grad_concat.slice_channels(i * n, n);
            let grad_pre = relu_backward(&cache.branch_pre[i], &grad_act);
            let (gi, gw, gb) = branch.backward(input, &grad_pre)?;
            for (acc, g) in grad_input.data.iter_mut().zip(&gi.data) {
                *acc += *g;
            }
            grads.push(gw);
            grads.push(gb);
        }
        grads.push(gw_bottleneck);
        grads.push(gb_bottleneck);
        Ok((grad_input, grads))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherNetSpec {
    /// Widths of the five blocks in topology order.
    pub block_widths: Vec<usize>,
    pub dropout_rate: f64,
    /// Scale applied to the distance channel so both inputs are O(1).
    pub distance_scale: f64,
    /// Range budget in meters used by the proximity encoding of the
    /// distance channel: a return at distance d is fed to the network as
    /// (budget − d) · distance_scale, and no-return pixels as 0. A missing
    /// return therefore reads as "beyond range", which agrees with the
    /// zero padding convolutions apply at frame borders, and local depth
    /// contrast against empty neighborhoods becomes a plain linear
    /// feature instead of one that needs masked averaging.
    #[serde(default = "default_no_return_distance")]
    pub no_return_distance: f64,
    pub classes: usize,
}

fn default_no_return_distance() -> f64 {
    200.0
}

impl Default for WeatherNetSpec {
    fn default() -> Self {
        Self {
            block_widths: vec![32, 64, 96, 96, 64],
            dropout_rate: 0.5,
            distance_scale: 0.01,
            no_return_distance: default_no_return_distance(),
            classes: 3,
        }
    }
}

impl WeatherNetSpec {
    /// Reduced widths for desk-scale training; same topology.
    pub fn reduced(widths: &[usize]) -> Self {
        Self {
            block_widths: widths.to_vec(),
            ..Self::default()
        }
    }

    pub fn block_specs(&self) -> Vec<LiLaBlockSpec> {
        let mut specs = Vec::new();
        let mut in_channels = 2; // distance + intensity
        for width in &self.block_widths {
            specs.push(LiLaBlockSpec {
                in_channels,
                width: *width,
            });
            in_channels = *width;
        }
        specs
    }

    pub fn param_count(&self) -> usize {
        let blocks: usize = self.block_specs().iter().map(|s| s.param_count()).sum();
        let head = self.block_widths.last().unwrap() * self.classes + self.classes;
        blocks + head
    }
}

#[derive(Debug, Clone)]
pub struct WeatherNet<T> {
    pub spec: WeatherNetSpec,
    pub blocks: Vec<LiLaBlock<T>>,
    pub head: Conv2d<T>,
}

pub struct NetCache<T> {
    block_inputs: Vec<Tensor4<T>>,
    block_caches: Vec<BlockCache<T>>,
    /// Inverted-dropout multiplier per element of block 4's output; empty
    /// in inference mode.
    dropout_mask: Vec<T>,
    head_input: Tensor4<T>,
}

impl<T: Real> WeatherNet<T> {
    pub fn init(spec: WeatherNetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = spec
            .block_specs()
            .into_iter()
            .map(|s| LiLaBlock::init(s, &mut rng))
            .collect();
        let head = Conv2d::init(
            ConvSpec::new(*spec.block_widths.last().unwrap(), spec.classes, (1, 1)),
            &mut rng,
        );
        Self { spec, blocks, head }
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.param_count()).sum::<usize>() + self.head.spec.param_count()
    }

    /// 2-channel input tensor from a range image: proximity-encoded
    /// distance and raw intensity. No-return pixels carry 0 in both
    /// channels, matching the zero padding used by the convolutions.
    pub fn input_from_image(&self, image: &RangeImage<T>) -> Tensor4<T> {
        let scale = T::from_f64(self.spec.distance_scale);
        let budget = T::from_f64(self.spec.no_return_distance);
        let mut t = Tensor4::zeros([1, 2, image.rows, image.cols]);
        for (i, (d, inten)) in image.distance.iter().zip(&image.intensity).enumerate() {
            t.data[i] = if *d > T::zero() {
                (budget - *d) * scale
            } else {
                T::zero()
            };
            t.data[image.rows * image.cols + i] = *inten;
        }
        t
    }

    /// Forward pass. `dropout_rng` enables training-mode dropout; pass
    /// `None` for deterministic inference.
    pub fn forward(
        &self,
        input: &Tensor4<T>,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor4<T>, NetCache<T>)> {
        input.check_finite("network input")?;
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        let mut current = input.clone();
        let mut dropout_mask = Vec::new();
        let dropout_after = self.blocks.len().saturating_sub(2); // after block 4 of 5
        for (i, block) in self.blocks.iter().enumerate() {
            block_inputs.push(current.clone());
            let (out, cache) = block.forward(&current)?;
            block_caches.push(cache);
            current = out;
            if i == dropout_after {
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    // inverted dropout, so inference needs no rescaling
                    let keep = 1.0 - self.spec.dropout_rate;
                    let scale = T::from_f64(1.0 / keep);
                    dropout_mask = (0..current.data.len())
                        .map(|_| {
                            if rng.gen::<f64>() < keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    for (v, m) in current.data.iter_mut().zip(&dropout_mask) {
                        *v = *v * *m;
                    }
                }
            }
        }
        let head_input = current;
        let logits = self.head.forward(&head_input)?;
        Ok((
            logits,
            NetCache {
                block_inputs,
                block_caches,
                dropout_mask,
                head_input,
            },
        ))
    }

    /// Backward pass; returns parameter gradients in serialization order
    /// (blocks in topology order, then head; weights before bias).
    pub fn backward(&self, cache: &NetCache<T>, grad_logits: &Tensor4<T>) -> Result<Vec<Vec<T>>> {
        let (mut grad, gw_head, gb_head) = {
            let (gi, gw, gb) = self.head.backward(&cache.head_input, grad_logits)?;
            (gi, gw, gb)
        };
        let dropout_after = self.blocks.len().saturating_sub(2);
        let mut block_grads: Vec<Vec<Vec<T>>> = vec![Vec::new(); self.blocks.len()];
        for i in (0..self.blocks.len()).rev() {
            if i == dropout_after && !cache.dropout_mask.is_empty() {
                for (g, m) in grad.data.iter_mut().zip(&cache.dropout_mask) {
                    *g = *g * *m;
                }
            }
            let (gi, grads) =
                self.blocks[i].backward(&cache.block_inputs[i], &cache.block_caches[i], &grad)?;
            block_grads[i] = grads;
            grad = gi;
        }
        let mut all = Vec::new();
        for grads in block_grads {
            all.extend(grads);
        }
        all.push(gw_head);
        all.push(gb_head);
        Ok(all)
    }

    /// Parameter groups in serialization order.
    pub fn params(&self) -> Vec<&Vec<T>> {
        let mut out = Vec::new();
        for block in &self.blocks {
            for branch in &block.branches {
                out.push(&branch.weight);
                out.push(&branch.bias);
            }
            out.push(&block.bottleneck.weight);
            out.push(&block.bottleneck.bias);
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for block in &mut self.blocks {
            for branch in &mut block.branches {
                out.push(&mut branch.weight);
                out.push(&mut branch.bias);
            }
            out.push(&mut block.bottleneck.weight);
            out.push(&mut block.bottleneck.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn flatten_params(&self) -> Vec<T> {
        self.params().into_iter().flatten().copied().collect()
    }

    pub fn load_flat_params(&mut self, flat: &[T]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(Error::shape(format!("{expected} parameters"), format!("{}", flat.len())));
        }
        let mut offset = 0;
        for group in self.params_mut() {
            let len = group.len();
            group.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Per-pixel argmax labels; no-return pixels (distance 0) map to
    /// no-return.
    pub fn predict(&self, image: &RangeImage<T>) -> Result<LabelImage> {
        let input = self.input_from_image(image);
        let (logits, _) = self.forward(&input, None)?;
        let mut labels = LabelImage::filled(image.rows, image.cols, Label::NoReturn);
        let plane = image.rows * image.cols;
        for i in 0..plane {
            if image.distance[i] > T::zero() {
                let mut best = 0;
                for c in 1..self.spec.classes {
                    if logits.data[c * plane + i] > logits.data[best * plane + i] {
                        best = c;
                    }
                }
                labels.labels[i] = match best {
                    0 => Label::Valid,
                    1 => Label::Rain,
                    _ => Label::Fog,
                };
            }
        }
        Ok(labels)
    }
}

/// Predict labels and remove predicted weather clutter: clutter pixels are
/// replaced by the no-return sentinel, valid pixels pass through.
pub fn predict_and_denoise<T: Real>(
    net: &WeatherNet<T>,
    image: &RangeImage<T>,
) -> Result<(LabelImage, RangeImage<T>)> {
    let labels = net.predict(image)?;
    let mut denoised = image.clone();
    for (i, label) in labels.labels.iter().enumerate() {
        if label.is_clutter() {
            denoised.distance[i] = T::zero();
            denoised.intensity[i] = T::zero();
        }
    }
    Ok((labels, denoised))
}
