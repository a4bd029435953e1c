//! Softmax cross-entropy loss, the training loop, and a finite-difference
//! gradient checker.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::block::WeatherNet;
use super::checkpoint;
use super::tensor::Tensor4;
use crate::augment::splitmix64;
use crate::error::{Error, Result};
use crate::image::{LabelImage, RangeImage};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossReduction {
    /// Average over labeled pixels.
    Mean,
    /// Sum over labeled pixels.
    Sum,
}

/// Per-pixel softmax over the channel axis.
pub fn softmax<T: Real>(logits: &Tensor4<T>) -> Tensor4<T> {
    let [b, c, h, w] = logits.shape;
    let mut out = Tensor4::zeros(logits.shape);
    let plane = h * w;
    for bi in 0..b {
        for p in 0..plane {
            let mut max = logits.data[(bi * c) * plane + p];
            for ci in 1..c {
                max = max.max(logits.data[(bi * c + ci) * plane + p]);
            }
            let mut sum = T::zero();
            for ci in 0..c {
                let e = (logits.data[(bi * c + ci) * plane + p] - max).exp();
                out.data[(bi * c + ci) * plane + p] = e;
                sum += e;
            }
            for ci in 0..c {
                out.data[(bi * c + ci) * plane + p] /= sum;
            }
        }
    }
    out
}

/// Cross-entropy of logits against per-pixel class labels. Unlabeled
/// (no-return) pixels contribute neither loss nor gradient. Returns the
/// reduced loss, the gradient w.r.t. the logits, and the labeled pixel
/// count.
pub fn softmax_xent<T: Real>(
    logits: &Tensor4<T>,
    labels: &[&LabelImage],
    reduction: LossReduction,
) -> Result<(f64, Tensor4<T>, usize)> {
    softmax_xent_weighted(logits, labels, reduction, [1.0; 3])
}

/// [`softmax_xent`] with a per-class loss weight. With strongly skewed
/// class frequencies (clutter is well under 1% of the labeled pixels) the
/// unweighted loss is minimized by predicting the majority class
/// everywhere; weighting rescues the rare classes. `Mean` reduction
/// divides by the total weight of the labeled pixels so the loss scale
/// stays comparable across weightings.
pub fn softmax_xent_weighted<T: Real>(
    logits: &Tensor4<T>,
    labels: &[&LabelImage],
    reduction: LossReduction,
    class_weights: [f64; 3],
) -> Result<(f64, Tensor4<T>, usize)> {
    let [b, c, h, w] = logits.shape;
    if labels.len() != b {
        return Err(Error::shape(format!("{b} label images"), format!("{}", labels.len())));
    }
    if class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("class weights must be finite and >= 0".into()));
    }
    let plane = h * w;
    let probs = softmax(logits);
    let mut grad = Tensor4::zeros(logits.shape);
    let mut loss = 0.0;
    let mut labeled = 0usize;
    let mut total_weight = 0.0f64;
    for (bi, image) in labels.iter().enumerate() {
        if image.rows != h || image.cols != w {
            return Err(Error::shape(format!("{h}x{w}"), format!("{}x{}", image.rows, image.cols)));
        }
        for (p, label) in image.labels.iter().enumerate() {
            let Some(class) = label.class_index() else {
                continue;
            };
            if class >= c {
                return Err(Error::shape(format!("class < {c}"), format!("{class}")));
            }
            labeled += 1;
            let weight = class_weights[class];
            total_weight += weight;
            let prob = probs.data[(bi * c + class) * plane + p].to_f64_lossy();
            loss -= weight * prob.max(f64::MIN_POSITIVE).ln();
            let w_t = T::from_f64(weight);
            for ci in 0..c {
                let target = if ci == class { T::one() } else { T::zero() };
                grad.data[(bi * c + ci) * plane + p] =
                    (probs.data[(bi * c + ci) * plane + p] - target) * w_t;
            }
        }
    }
    if labeled == 0 || total_weight == 0.0 {
        if total_weight == 0.0 {
            for g in grad.data.iter_mut() {
                *g = T::zero();
            }
        }
        return Ok((0.0, grad, labeled));
    }
    if reduction == LossReduction::Mean {
        loss /= total_weight;
        let inv = T::from_f64(1.0 / total_weight);
        for g in grad.data.iter_mut() {
            *g *= inv;
        }
    }
    Ok((loss, grad, labeled))
}

/// Inverse-frequency class weights from a labeled dataset:
/// `w_c = labeled / (3 * count_c)`, so a balanced dataset gets unit
/// weights. Classes absent from the data get weight 0 (they can produce
/// neither loss nor gradient anyway).
pub fn balanced_class_weights(labels: &[&LabelImage]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for image in labels {
        for label in &image.labels {
            if let Some(class) = label.class_index() {
                counts[class] += 1;
            }
        }
    }
    let labeled: usize = counts.iter().sum();
    let mut weights = [0.0; 3];
    for (w, &n) in weights.iter_mut().zip(&counts) {
        if n > 0 {
            *w = labeled as f64 / (3.0 * n as f64);
        }
    }
    weights
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub reduction: LossReduction,
    pub seed: u64,
    /// Write a checkpoint here after every epoch when set.
    pub checkpoint_dir: Option<PathBuf>,
    /// Training-mode dropout; disable to make tiny overfitting runs exact.
    pub dropout: bool,
    /// Per-class loss weights (valid, rain, fog); see
    /// [`balanced_class_weights`] for the inverse-frequency choice.
    pub class_weights: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::desk(),
            epochs: 10,
            batch_size: 20,
            reduction: LossReduction::Mean,
            seed: 0,
            checkpoint_dir: None,
            dropout: true,
            class_weights: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub labeled_pixels: usize,
}

fn stack_batch<T: Real>(net: &WeatherNet<T>, images: &[&RangeImage<T>]) -> Result<Tensor4<T>> {
    let first = images.first().ok_or_else(|| Error::EmptyInput("empty batch".into()))?;
    let (h, w) = (first.rows, first.cols);
    let mut out = Tensor4::zeros([images.len(), 2, h, w]);
    let per_item = 2 * h * w;
    for (i, image) in images.iter().enumerate() {
        if image.rows != h || image.cols != w {
            return Err(Error::shape(format!("{h}x{w}"), format!("{}x{}", image.rows, image.cols)));
        }
        let single = net.input_from_image(image);
        out.data[i * per_item..(i + 1) * per_item].copy_from_slice(&single.data);
    }
    Ok(out)
}

/// Minimize the per-pixel cross-entropy over the dataset with Adam.
/// Deterministic for a fixed seed: batch order, dropout and the update
/// sequence are all derived from `config.seed`.
pub fn train<T: Real>(
    net: &mut WeatherNet<T>,
    dataset: &[(RangeImage<T>, LabelImage)],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidParameter("batch_size and epochs must be positive".into()));
    }
    let mut adam = AdamState::<T>::new(config.adam, net.param_count());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x64726f70));
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut labeled_total = 0usize;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(splitmix64(config.seed.wrapping_add(epoch as u64)));
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_id, chunk) in order.chunks(config.batch_size).enumerate() {
            let images: Vec<&RangeImage<T>> = chunk.iter().map(|i| &dataset[*i].0).collect();
            let labels: Vec<&LabelImage> = chunk.iter().map(|i| &dataset[*i].1).collect();
            let input = stack_batch(net, &images)?;
            let rng = if config.dropout { Some(&mut dropout_rng) } else { None };
            let (logits, cache) = net.forward(&input, rng)?;
            let (loss, grad_logits, labeled) =
                softmax_xent_weighted(&logits, &labels, config.reduction, config.class_weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss diverged at epoch {epoch}, batch {batch_id}"
                )));
            }
            labeled_total += labeled;
            if labeled == 0 {
                continue;
            }
            let grads = net.backward(&cache, &grad_logits)?;
            let flat_grads: Vec<T> = grads.into_iter().flatten().collect();
            let mut flat_params = net.flatten_params();
            adam.step(&mut flat_params, &flat_grads)?;
            net.load_flat_params(&flat_params)?;
            epoch_loss += loss;
            batches += 1;
        }
        adam.end_epoch();
        epoch_losses.push(if batches > 0 { epoch_loss / batches as f64 } else { 0.0 });
        if let Some(dir) = &config.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            checkpoint::save(&dir.join(format!("epoch_{epoch:04}.ckpt")), net, epoch, config.seed)?;
        }
    }
    Ok(TrainReport {
        final_loss: *epoch_losses.last().unwrap(),
        epoch_losses,
        labeled_pixels: labeled_total,
    })
}

/// Compare analytic gradients against central finite differences over
/// every parameter; returns the largest relative error.
pub fn gradient_check(
    net: &mut WeatherNet<f64>,
    image: &RangeImage<f64>,
    labels: &LabelImage,
    epsilon: f64,
) -> Result<f64> {
    let input = net.input_from_image(image);
    let (logits, cache) = net.forward(&input, None)?;
    let (loss, grad_logits, _) = softmax_xent(&logits, &[labels], LossReduction::Mean)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("gradient-check loss".into()));
    }
    let analytic: Vec<f64> = net.backward(&cache, &grad_logits)?.into_iter().flatten().collect();
    let mut params = net.flatten_params();
    let mut max_rel = 0.0f64;
    for i in 0..params.len() {
        let original = params[i];
        params[i] = original + epsilon;
        net.load_flat_params(&params)?;
        let plus = loss_only(net, &input, labels)?;
        params[i] = original - epsilon;
        net.load_flat_params(&params)?;
        let minus = loss_only(net, &input, labels)?;
        params[i] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        // the denominator floor keeps roundoff noise on near-zero
        // gradients from dominating the metric
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-6);
        max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
    }
    net.load_flat_params(&params)?;
    Ok(max_rel)
}

fn loss_only(net: &WeatherNet<f64>, input: &Tensor4<f64>, labels: &LabelImage) -> Result<f64> {
    let (logits, _) = net.forward(input, None)?;
    let (loss, _, _) = softmax_xent(&logits, &[labels], LossReduction::Mean)?;
    Ok(loss)
}
