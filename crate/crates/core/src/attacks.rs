//! Desk-scale attacks: adversarial patches for images, FGSM and BIM for audio
//! features.
//!
//! Audio attacks perturb the model-ready MFCC feature tensor, not the
//! waveform; the feature extractor is not differentiated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpret::Region;
use crate::nn::{ModelGraph, Objective};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchLocation {
    At { top: usize, left: usize },
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatchContent {
    Optimized { target: usize, steps: usize, eta: f64 },
    HighFrequencyRandom,
    Loaded(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSpec {
    /// Side length in pixels; patches are square.
    pub size: usize,
    pub location: PatchLocation,
    pub content: PatchContent,
}

impl PatchSpec {
    /// Top-left corner for an `h × w` image.
    pub fn place(&self, h: usize, w: usize, rng: &mut impl Rng) -> Result<(usize, usize)> {
        if self.size > h || self.size > w {
            return Err(Error::InvalidConfig(format!(
                "{0}x{0} patch does not fit a {h}x{w} image",
                self.size
            )));
        }
        match self.location {
            PatchLocation::At { top, left } => {
                if top + self.size > h || left + self.size > w {
                    return Err(Error::InvalidConfig(format!(
                        "patch at ({top}, {left}) leaves the {h}x{w} image"
                    )));
                }
                Ok((top, left))
            }
            PatchLocation::Random => Ok((rng.gen_range(0..=h - self.size), rng.gen_range(0..=w - self.size))),
        }
    }
}

/// Replaces the pixels under `patch` (`[C, ph, pw]`) with its values.
pub fn apply_patch(image: &Tensor, patch: &Tensor, top: usize, left: usize) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::InvalidTensor(format!(
            "image must be [C, H, W], got {:?}",
            image.shape()
        )));
    };
    let mut out = image.clone();
    if patch.is_empty() {
        return Ok(out);
    }
    let &[pc, ph, pw] = patch.shape() else {
        return Err(Error::InvalidTensor(format!(
            "patch must be [C, h, w], got {:?}",
            patch.shape()
        )));
    };
    if pc != c || top + ph > h || left + pw > w {
        return Err(Error::InvalidConfig(format!(
            "{pc}x{ph}x{pw} patch at ({top}, {left}) does not fit a {c}x{h}x{w} image"
        )));
    }
    for ch in 0..c {
        for y in 0..ph {
            for x in 0..pw {
                out.set3(ch, top + y, left + x, patch.at3(ch, y, x));
            }
        }
    }
    Ok(out)
}

/// Uniform noise in `[0, 1]`, independent per pixel and channel.
pub fn random_patch(channels: usize, size: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(&[channels, size, size], |_| rng.gen::<f32>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchOutcome {
    pub patch: Tensor,
    /// Mean target logit of every accepted iterate, starting with the
    /// initialization.
    pub objective_trace: Vec<f64>,
    /// Targeted fooling rate of the returned patch over the training pool.
    pub fooling_rate: f64,
}

/// Targeted patch by projected gradient ascent on the mean target logit over
/// `train_images`, each with its own fixed placement drawn from `seed`.
///
/// A step that lowers the objective is rejected and the step size halved, so
/// accepted objectives never decrease. The returned patch is the accepted
/// iterate with the highest fooling rate (earliest on ties).
pub fn optimize_patch(
    model: &ModelGraph,
    target: usize,
    size: usize,
    steps: usize,
    eta: f64,
    train_images: &[Tensor],
    seed: u64,
) -> Result<PatchOutcome> {
    if target >= model.num_classes() {
        return Err(Error::InvalidObjective(format!("target class {target} out of range")));
    }
    if train_images.is_empty() {
        return Err(Error::Dataset("patch optimization needs training images".into()));
    }
    let &[c, h, w] = model.input_shape() else {
        return Err(Error::InvalidConfig("patches need an image model".into()));
    };
    let spec = PatchSpec {
        size,
        location: PatchLocation::Random,
        content: PatchContent::HighFrequencyRandom,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let places = train_images
        .iter()
        .map(|_| spec.place(h, w, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut patch = random_patch(c, size, &mut rng);

    let score = |p: &Tensor| -> Result<(f64, f64)> {
        let mut logit = 0.0;
        let mut fooled = 0usize;
        for (img, &(top, left)) in train_images.iter().zip(&places) {
            let out = model.forward(&apply_patch(img, p, top, left)?, &[])?;
            logit += out.logits.data()[target] as f64;
            fooled += (out.predicted == target) as usize;
        }
        let n = train_images.len() as f64;
        let logit = logit / n;
        if !logit.is_finite() {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok((logit, fooled as f64 / n))
    };

    let (mut current, mut best_rate) = score(&patch)?;
    let mut best = patch.clone();
    let mut trace = vec![current];
    let mut step_size = eta;
    for step in 0..steps {
        let mut grad = vec![0f64; patch.len()];
        for (img, &(top, left)) in train_images.iter().zip(&places) {
            let g = model.input_gradient(&apply_patch(img, &patch, top, left)?, Objective::ClassLogit(target))?;
            for ch in 0..c {
                for y in 0..size {
                    for x in 0..size {
                        grad[(ch * size + y) * size + x] += g.at3(ch, top + y, left + x) as f64;
                    }
                }
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        let candidate = Tensor::new(
            patch.shape().to_vec(),
            patch
                .data()
                .iter()
                .zip(&grad)
                .map(|(&p, &g)| (p as f64 + step_size * g.signum()).clamp(0.0, 1.0) as f32)
                .collect(),
        )?;
        let (value, rate) = score(&candidate).map_err(|_| Error::NonFinite { step })?;
        if value >= current {
            patch = candidate;
            current = value;
            trace.push(value);
            if rate > best_rate {
                best_rate = rate;
                best = patch.clone();
            }
        } else {
            step_size *= 0.5;
        }
    }
    Ok(PatchOutcome {
        patch: best,
        objective_trace: trace,
        fooling_rate: best_rate,
    })
}

/// Value range of model inputs an attack must respect.
pub type Bounds = Option<(f32, f32)>;

fn sign_step(model: &ModelGraph, x: &Tensor, label: usize, target: Option<usize>, step: f64) -> Result<Tensor> {
    let (objective, dir) = match target {
        Some(t) => (Objective::CrossEntropy { target: t }, -1.0),
        None => (Objective::CrossEntropy { target: label }, 1.0),
    };
    let g = model.input_gradient(x, objective)?;
    Tensor::new(
        x.shape().to_vec(),
        x.data()
            .iter()
            .zip(g.data())
            .map(|(&v, &g)| {
                let s = if g > 0.0 {
                    1.0
                } else if g < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (v as f64 + dir * step * s) as f32
            })
            .collect(),
    )
}

fn project(x: &mut Tensor, origin: &Tensor, epsilon: f64, bounds: Bounds) {
    let eps = epsilon as f32;
    for (v, &o) in x.data_mut().iter_mut().zip(origin.data()) {
        *v = v.clamp(o - eps, o + eps);
        if let Some((lo, hi)) = bounds {
            *v = v.clamp(lo, hi);
        }
    }
}

/// One signed-gradient step of size `epsilon` on the cross-entropy of the true
/// `label` (untargeted, ascending) or of `target` (descending).
pub fn fgsm_audio(
    model: &ModelGraph,
    features: &Tensor,
    label: usize,
    epsilon: f64,
    target: Option<usize>,
    bounds: Bounds,
) -> Result<Tensor> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if epsilon == 0.0 {
        return Ok(features.clone());
    }
    let mut x = sign_step(model, features, label, target, epsilon)?;
    project(&mut x, features, epsilon, bounds);
    Ok(x)
}

/// Iterated FGSM with step `step`, projected back into the `epsilon` ball
/// around the original after every iteration.
#[allow(clippy::too_many_arguments)]
pub fn bim_audio(
    model: &ModelGraph,
    features: &Tensor,
    label: usize,
    epsilon: f64,
    step: f64,
    iters: usize,
    target: Option<usize>,
    bounds: Bounds,
) -> Result<Tensor> {
    if !(epsilon >= 0.0) || !(step >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon and step must be >= 0, got {epsilon} and {step}"
        )));
    }
    let mut x = features.clone();
    if epsilon == 0.0 {
        return Ok(x);
    }
    for _ in 0..iters {
        x = sign_step(model, &x, label, target, step)?;
        project(&mut x, features, epsilon, bounds);
    }
    Ok(x)
}

/// Region covered by a patch placed at `(top, left)`.
pub fn patch_region(top: usize, left: usize, size: usize) -> Region {
    Region {
        top,
        left,
        bottom: top + size,
        right: left + size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer};

    #[test]
    fn zero_and_full_patches() {
        let img = Tensor::from_fn(&[1, 4, 4], |i| i as f32);
        let empty = Tensor::zeros(&[1, 0, 0]);
        assert_eq!(apply_patch(&img, &empty, 0, 0).unwrap(), img);
        let full = Tensor::full(&[1, 4, 4], 9.0);
        assert_eq!(apply_patch(&img, &full, 0, 0).unwrap(), full);
    }

    #[test]
    fn two_by_two_patch_replaces_four_pixels() {
        let img = Tensor::zeros(&[1, 4, 4]);
        let out = apply_patch(&img, &Tensor::full(&[1, 2, 2], 1.0), 1, 1).unwrap();
        assert_eq!(out.data().iter().filter(|&&v| v != 0.0).count(), 4);
        assert_eq!(out.at3(0, 1, 1), 1.0);
        assert_eq!(out.at3(0, 2, 2), 1.0);
        assert!(apply_patch(&img, &Tensor::full(&[1, 2, 2], 1.0), 3, 0).is_err());
    }

    #[test]
    fn random_placement_fits() {
        let spec = PatchSpec {
            size: 5,
            location: PatchLocation::Random,
            content: PatchContent::HighFrequencyRandom,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (t, l) = spec.place(8, 6, &mut rng).unwrap();
            assert!(t + 5 <= 8 && l + 5 <= 6);
        }
        assert!(spec.place(4, 8, &mut rng).is_err());
    }

    fn linear_classifier() -> ModelGraph {
        // logit0 = x0 - x1, logit1 = x1 - x0
        let mut d = Dense::zeros(2, 2);
        d.weights.copy_from_slice(&[1.0, -1.0, -1.0, 1.0]);
        ModelGraph::new(vec![2], vec!["a".into(), "b".into()], vec![Layer::Dense(d)], None).unwrap()
    }

    #[test]
    fn fgsm_respects_ball() {
        let m = linear_classifier();
        let x = Tensor::new(vec![2], vec![0.6, 0.4]).unwrap();
        assert_eq!(fgsm_audio(&m, &x, 0, 0.0, None, None).unwrap(), x);
        let adv = fgsm_audio(&m, &x, 0, 0.15, None, None).unwrap();
        assert!(adv.max_abs_diff(&x) <= 0.15 + 1e-6);
        assert_eq!(m.forward(&adv, &[]).unwrap().predicted, 1);
        let targeted = fgsm_audio(&m, &x, 0, 0.15, Some(1), None).unwrap();
        assert_eq!(targeted, adv);
    }

    #[test]
    fn bim_stays_in_ball_and_bounds() {
        let m = linear_classifier();
        let x = Tensor::new(vec![2], vec![0.95, 0.05]).unwrap();
        let adv = bim_audio(&m, &x, 0, 0.3, 0.05, 20, None, Some((0.0, 1.0))).unwrap();
        assert!(adv.max_abs_diff(&x) <= 0.3 + 1e-6);
        assert!(adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(bim_audio(&m, &x, 0, 0.0, 0.1, 5, None, None).unwrap(), x);
    }
}
