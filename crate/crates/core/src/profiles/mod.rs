//! Per-class reference data built from correctly classified natural inputs.

mod store;

pub use store::{fingerprint, load_profiles, save_profiles, ProfileStore, PROFILE_MAGIC, PROFILE_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ModelGraph;
use crate::pattern::{activation_pattern, semantic_pattern};
use crate::signal::{ActivationDistribution, BinarySpectrum};
use crate::tensor::Tensor;

/// A model input with its true class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub n_samples: usize,
    pub alpha: f64,
    pub crop_size: usize,
    pub k: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            alpha: 0.7,
            crop_size: 32,
            k: 6,
        }
    }
}

/// Expected binarized spectrum of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageClassProfile {
    pub class: usize,
    pub expected: BinarySpectrum,
    pub samples: usize,
}

/// Mean last-layer activation magnitudes of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClassProfile {
    pub class: usize,
    pub expected: ActivationDistribution,
    /// Indices of the `k` largest entries of `expected`, largest first.
    pub top_k: Vec<usize>,
    pub samples: usize,
}

impl AudioClassProfile {
    pub fn new(class: usize, expected: ActivationDistribution, k: usize, samples: usize) -> Result<Self> {
        if k == 0 || k > expected.len() {
            return Err(Error::InvalidConfig(format!(
                "top-k size {k} must lie in 1..={}",
                expected.len()
            )));
        }
        if samples == 0 {
            return Err(Error::InvalidConfig("profile needs at least one sample".into()));
        }
        let top_k = expected.top_k(k);
        Ok(Self {
            class,
            expected,
            top_k,
            samples,
        })
    }

    pub fn k(&self) -> usize {
        self.top_k.len()
    }
}

/// Bitwise majority vote; a bit is set when at least half the masks set it.
pub fn majority_vote(masks: &[BinarySpectrum]) -> Result<BinarySpectrum> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidConfig("majority vote of zero masks".into()))?;
    let (rows, cols) = first.dims();
    let mut counts = vec![0usize; rows * cols];
    for m in masks {
        if m.dims() != (rows, cols) {
            let (r, c) = m.dims();
            return Err(Error::DimMismatch(vec![rows, cols], vec![r, c]));
        }
        for (n, &b) in counts.iter_mut().zip(m.bits()) {
            *n += b as usize;
        }
    }
    let bits = counts.iter().map(|&n| 2 * n >= masks.len()).collect();
    BinarySpectrum::new(rows, cols, bits)
}

/// Expected spectrum of `class` from the first `n_samples` correctly
/// classified samples (in dataset order) with a located activation source.
pub fn build_image_profile(
    model: &ModelGraph,
    dataset: &[Sample],
    class: usize,
    cfg: &ProfileConfig,
) -> Result<ImageClassProfile> {
    check_class(model, class)?;
    let mut masks = Vec::new();
    for s in dataset.iter().filter(|s| s.label == class) {
        if masks.len() == cfg.n_samples {
            break;
        }
        let p = semantic_pattern(model, &s.input, cfg.alpha, cfg.crop_size)?;
        if p.forward.predicted != class {
            continue;
        }
        if let Some((_, mask)) = p.located {
            masks.push(mask);
        }
    }
    if masks.len() < cfg.n_samples.max(1) {
        return Err(Error::InsufficientSamples {
            class,
            needed: cfg.n_samples.max(1),
            found: masks.len(),
        });
    }
    Ok(ImageClassProfile {
        class,
        expected: majority_vote(&masks)?,
        samples: masks.len(),
    })
}

/// Mean activation magnitudes of `class` over its first `n_samples` correctly
/// classified samples.
pub fn build_audio_profile(
    model: &ModelGraph,
    dataset: &[Sample],
    class: usize,
    cfg: &ProfileConfig,
) -> Result<AudioClassProfile> {
    check_class(model, class)?;
    let mut sum: Vec<f64> = Vec::new();
    let mut used = 0;
    for s in dataset.iter().filter(|s| s.label == class) {
        if used == cfg.n_samples {
            break;
        }
        let (fwd, dist) = activation_pattern(model, &s.input)?;
        if fwd.predicted != class {
            continue;
        }
        if sum.is_empty() {
            sum = vec![0.0; dist.len()];
        }
        for (a, &v) in sum.iter_mut().zip(dist.values()) {
            *a += v as f64;
        }
        used += 1;
    }
    if used < cfg.n_samples.max(1) {
        return Err(Error::InsufficientSamples {
            class,
            needed: cfg.n_samples.max(1),
            found: used,
        });
    }
    let mean = sum.iter().map(|&v| (v / used as f64) as f32).collect();
    AudioClassProfile::new(class, ActivationDistribution::from_magnitudes(mean)?, cfg.k, used)
}

/// Image profiles for every class of the model.
pub fn build_image_store(model: &ModelGraph, dataset: &[Sample], cfg: &ProfileConfig) -> Result<ProfileStore> {
    let mut store = ProfileStore::new(model, *cfg);
    for class in 0..model.num_classes() {
        store.insert_image(build_image_profile(model, dataset, class, cfg)?);
    }
    Ok(store)
}

/// Activation profiles for every class of the model.
pub fn build_audio_store(model: &ModelGraph, dataset: &[Sample], cfg: &ProfileConfig) -> Result<ProfileStore> {
    let mut store = ProfileStore::new(model, *cfg);
    for class in 0..model.num_classes() {
        store.insert_audio(build_audio_profile(model, dataset, class, cfg)?);
    }
    Ok(store)
}

fn check_class(model: &ModelGraph, class: usize) -> Result<()> {
    if class >= model.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "class {class} out of range for {} classes",
            model.num_classes()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: [bool; 4]) -> BinarySpectrum {
        BinarySpectrum::new(2, 2, bits.to_vec()).unwrap()
    }

    #[test]
    fn majority_of_three() {
        let a = mask([true, false, true, false]);
        let b = mask([false, true, true, true]);
        assert_eq!(majority_vote(&[a.clone(), a.clone(), b]).unwrap(), a);
    }

    #[test]
    fn half_counts_as_majority() {
        let a = mask([true, false, false, false]);
        let b = mask([false, true, false, false]);
        assert_eq!(majority_vote(&[a, b]).unwrap(), mask([true, true, false, false]));
    }

    #[test]
    fn audio_profile_top_k() {
        let d = ActivationDistribution::from_magnitudes(vec![2.0, 4.0]).unwrap();
        let p = AudioClassProfile::new(0, d.clone(), 1, 2).unwrap();
        assert_eq!(p.top_k, vec![1]);
        let p = AudioClassProfile::new(0, d.clone(), 2, 2).unwrap();
        assert_eq!(p.top_k, vec![1, 0]);
        assert!(AudioClassProfile::new(0, d, 3, 2).is_err());
    }
}
