//! Toy architectures and a mini-batch Adam trainer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Dense, Layer, ModelGraph, Network};
use crate::profiles::Sample;

/// He-normal weights, zero biases.
fn init(layers: &mut [Layer], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in layers {
        let fan_in = match layer {
            Layer::Conv2d(c) => c.in_channels * c.kernel.0 * c.kernel.1,
            Layer::Dense(d) => d.inputs,
            _ => continue,
        };
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        if let Some((w, _)) = layer.params_mut() {
            for v in w {
                *v = normal.sample(&mut rng) as f32;
            }
        }
    }
}

/// `[3, 32, 32]` classifier: a 3×3 convolution and 2×2 pooling, two more
/// 3×3 convolutions, global average pooling and a dense head. The last
/// convolution outputs `[32, 16, 16]` at total stride 2.
pub fn image_toy_model(labels: Vec<String>, seed: u64) -> Result<ModelGraph> {
    let classes = labels.len();
    let mut layers = vec![
        Layer::Conv2d(Conv2d::square(3, 16, 3, 1, 1)),
        Layer::Relu,
        Layer::MaxPool2d {
            window: (2, 2),
            stride: (2, 2),
        },
        Layer::Conv2d(Conv2d::square(16, 24, 3, 1, 1)),
        Layer::Relu,
        Layer::Conv2d(Conv2d::square(24, 32, 3, 1, 1)),
        Layer::Relu,
        Layer::GlobalAvgPool,
        Layer::Dense(Dense::zeros(32, classes)),
        Layer::Softmax,
    ];
    init(&mut layers, seed);
    ModelGraph::new(vec![3, 32, 32], labels, layers, Some(5))
}

/// Width of the audio model's last convolution.
pub const AUDIO_FEATURES: usize = 128;

/// `[coefficients, frames, 1]` command classifier. Convolutions run along the
/// time axis; the last one spans the remaining frames, so its output is
/// `[128, 1, 1]`. The first convolution has no padding, which keeps input
/// normalization foldable into its weights.
pub fn audio_toy_model(coefficients: usize, frames: usize, labels: Vec<String>, seed: u64) -> Result<ModelGraph> {
    let classes = labels.len();
    let conv = |cin: usize, cout: usize, kh: usize, pad: usize| {
        Layer::Conv2d(Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel: (kh, 1),
            stride: (1, 1),
            padding: (pad, 0),
            weights: vec![0.0; cout * cin * kh],
            bias: vec![0.0; cout],
        })
    };
    let pool = || Layer::MaxPool2d {
        window: (2, 1),
        stride: (2, 1),
    };
    if frames < 8 {
        return Err(Error::InvalidConfig(format!(
            "{frames} frames is too short for the audio model"
        )));
    }
    let after_first = (frames - 4) / 2;
    let after_second = after_first / 2;
    let mut layers = vec![
        conv(coefficients, 24, 5, 0),
        Layer::Relu,
        pool(),
        conv(24, 32, 3, 1),
        Layer::Relu,
        pool(),
        conv(32, AUDIO_FEATURES, after_second, 0),
        Layer::Relu,
        Layer::Dense(Dense::zeros(AUDIO_FEATURES, classes)),
        Layer::Softmax,
    ];
    init(&mut layers, seed);
    ModelGraph::new(vec![coefficients, frames, 1], labels, layers, Some(6))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 2e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f32], grad: &[f64], lr: f64, t: i32) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        let c1 = 1.0 - B1.powi(t);
        let c2 = 1.0 - B2.powi(t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= (lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8)) as f32;
        }
    }
}

type Grads = Vec<Option<(Vec<f64>, Vec<f64>)>>;

fn add_into(acc: &mut Grads, g: Grads) {
    for (a, g) in acc.iter_mut().zip(g) {
        if let (Some((aw, ab)), Some((gw, gb))) = (a.as_mut(), g) {
            aw.iter_mut().zip(gw).for_each(|(a, g)| *a += g);
            ab.iter_mut().zip(gb).for_each(|(a, g)| *a += g);
        }
    }
}

/// Minimizes cross-entropy with Adam. Per-sample gradients are computed in
/// parallel and summed in batch order, so results do not depend on the
/// number of worker threads.
pub fn train(model: &mut ModelGraph, data: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "batch size must be positive and learning rate > 0, got {} and {}",
            cfg.batch_size, cfg.learning_rate
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut moments: Vec<(usize, Moments, Moments)> = model
        .params_mut()
        .map(|(i, w, b)| (i, Moments::new(w.len()), Moments::new(b.len())))
        .collect();
    let mut t = 0;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample = batch
                .par_iter()
                .map(|&i| model.loss_gradients(&data[i].input, data[i].label))
                .collect::<Result<Vec<_>>>()?;
            let mut acc: Option<Grads> = None;
            for (loss, g) in per_sample {
                total += loss;
                match acc.as_mut() {
                    None => acc = Some(g),
                    Some(a) => add_into(a, g),
                }
            }
            let acc = acc.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            t += 1;
            for ((li, w, b), (mi, mw, mb)) in model.params_mut().zip(moments.iter_mut()) {
                debug_assert_eq!(li, *mi);
                let (gw, gb) = acc[li].as_ref().expect("parameterized layer");
                let gw: Vec<f64> = gw.iter().map(|g| g * scale).collect();
                let gb: Vec<f64> = gb.iter().map(|g| g * scale).collect();
                mw.step(w, &gw, cfg.learning_rate, t);
                mb.step(b, &gb, cfg.learning_rate, t);
            }
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite { step: epoch_loss.len() });
        }
        epoch_loss.push(mean);
    }
    Ok(TrainReport {
        epoch_loss,
        train_accuracy: accuracy(model, data)?,
    })
}

/// Fraction of samples whose prediction equals the label.
pub fn accuracy<N: Network + Sync + ?Sized>(net: &N, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Dataset("cannot score an empty set".into()));
    }
    let hits = data
        .par_iter()
        .map(|s| net.forward(&s.input, &[]).map(|o| (o.predicted == s.label) as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}

/// Per-channel mean and standard deviation over every sample and position.
pub fn channel_stats(data: &[Sample]) -> Result<(Vec<f32>, Vec<f32>)> {
    let first = data
        .first()
        .ok_or_else(|| Error::Dataset("cannot compute statistics of an empty set".into()))?;
    let channels = first.input.shape()[0];
    let per = first.input.len() / channels;
    let mut sum = vec![0f64; channels];
    let mut sq = vec![0f64; channels];
    for s in data {
        if s.input.shape() != first.input.shape() {
            return Err(Error::ShapeMismatch {
                expected: first.input.shape().to_vec(),
                actual: s.input.shape().to_vec(),
            });
        }
        for (i, &v) in s.input.data().iter().enumerate() {
            sum[i / per] += v as f64;
            sq[i / per] += (v as f64).powi(2);
        }
    }
    let n = (data.len() * per) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n - m * m).max(0.0).sqrt().max(1e-6)) as f32)
        .collect();
    Ok((mean.iter().map(|&m| m as f32).collect(), std))
}

/// Standardizes each channel of every sample in place.
pub fn normalize(data: &mut [Sample], mean: &[f32], std: &[f32]) {
    for s in data {
        let per = s.input.len() / mean.len();
        for (i, v) in s.input.data_mut().iter_mut().enumerate() {
            *v = (*v - mean[i / per]) / std[i / per];
        }
    }
}

/// Rewrites the first layer so the model accepts raw inputs while computing
/// exactly what it computed on standardized ones. The first layer must be an
/// unpadded convolution or a dense layer over a rank-1 input.
pub fn fold_normalization(model: &mut ModelGraph, mean: &[f32], std: &[f32]) -> Result<()> {
    match model.layer_mut(0) {
        Layer::Conv2d(c) if c.padding == (0, 0) && c.in_channels == mean.len() => {
            let taps = c.kernel.0 * c.kernel.1;
            for f in 0..c.out_channels {
                let mut shift = 0f64;
                for ch in 0..c.in_channels {
                    for t in 0..taps {
                        let w = &mut c.weights[(f * c.in_channels + ch) * taps + t];
                        *w /= std[ch];
                        shift += (*w * mean[ch]) as f64;
                    }
                }
                c.bias[f] -= shift as f32;
            }
            Ok(())
        }
        Layer::Dense(d) if d.inputs == mean.len() => {
            for o in 0..d.outputs {
                let mut shift = 0f64;
                for i in 0..d.inputs {
                    let w = &mut d.weights[o * d.inputs + i];
                    *w /= std[i];
                    shift += (*w * mean[i]) as f64;
                }
                d.bias[o] -= shift as f32;
            }
            Ok(())
        }
        _ => Err(Error::InvalidConfig(
            "normalization folds only into an unpadded first convolution or dense layer".into(),
        )),
    }
}
