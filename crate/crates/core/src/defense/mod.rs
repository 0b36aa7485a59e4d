//! Self-verification and data recovery.
//!
//! One forward pass yields the prediction and the last-layer activations. The
//! input's pattern is compared with the predicted class's profile; if the
//! inconsistency exceeds the threshold the input is repaired and classified
//! again.

mod audio;
mod image;

pub use audio::{detect_audio, detect_audio_waveform, inspect_audio, recover_audio, suppress_activations};
pub use image::{detect_image, inspect_image, neighbor_interpolate, recover_image};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpret::Region;
use crate::nn::Network;
use crate::profiles::ProfileStore;
use crate::signal::pearson_inconsistency;
use crate::tensor::Tensor;

pub const DEFAULT_IMAGE_THRESHOLD: f64 = 0.46;
pub const DEFAULT_AUDIO_THRESHOLD: f64 = 0.11;
pub const DEFAULT_TOP_K: usize = 6;
pub const DEFAULT_ALPHA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Audio,
    /// Image input checked with both metrics; adversarial if either exceeds
    /// its threshold.
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Natural,
    Adversarial,
    /// The metric could not be evaluated (no activation source, zero variance).
    Indeterminate,
}

impl Verdict {
    pub fn from_score(inconsistency: f64, threshold: f64) -> Self {
        if inconsistency > threshold {
            Verdict::Adversarial
        } else {
            Verdict::Natural
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Natural => "natural",
            Verdict::Adversarial => "adversarial",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

/// Outcome of one self-check. Serialized field order is the declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub modality: Modality,
    pub predicted: usize,
    pub confidence: f32,
    pub inconsistency: Option<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
    pub region: Option<Region>,
    pub flagged: Option<Vec<usize>>,
    /// Activation-metric score and threshold in combined mode.
    pub activation_check: Option<(f64, f64)>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Recovered {
    Image(Tensor),
    Activations(Tensor),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryOutcome {
    #[serde(skip)]
    pub recovered: Recovered,
    pub predicted: usize,
    /// Top-1 probability of the original prediction, when known.
    pub old_confidence: Option<f32>,
    pub new_confidence: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub modality: Modality,
    pub image_threshold: f64,
    pub audio_threshold: f64,
    pub alpha: f64,
    pub k: usize,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            modality: Modality::Image,
            image_threshold: DEFAULT_IMAGE_THRESHOLD,
            audio_threshold: DEFAULT_AUDIO_THRESHOLD,
            alpha: DEFAULT_ALPHA,
            k: DEFAULT_TOP_K,
        }
    }
}

impl DefenseConfig {
    pub fn audio() -> Self {
        Self {
            modality: Modality::Audio,
            ..Self::default()
        }
    }

    pub fn threshold(&self) -> f64 {
        match self.modality {
            Modality::Audio => self.audio_threshold,
            Modality::Image | Modality::Combined => self.image_threshold,
        }
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        match self.modality {
            Modality::Audio => self.audio_threshold = t,
            Modality::Image | Modality::Combined => self.image_threshold = t,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefenseOutcome {
    pub label: usize,
    pub report: DetectionReport,
    pub recovery: Option<RecoveryOutcome>,
}

/// Full check-then-repair flow. Natural and indeterminate inputs keep the
/// original prediction.
///
/// Image inputs cost at most two full passes; audio inputs cost one full pass
/// plus, when flagged, one pass through the layers after the last convolution.
pub fn defend<N: Network + ?Sized>(
    net: &N,
    input: &Tensor,
    store: &ProfileStore,
    cfg: &DefenseConfig,
) -> Result<DefenseOutcome> {
    match cfg.modality {
        Modality::Image | Modality::Combined => {
            let started = std::time::Instant::now();
            let (mut report, pattern) = inspect_image(net, input, store, cfg.image_threshold, cfg.alpha)?;
            if cfg.modality == Modality::Combined {
                combine_activation_check(net, &mut report, &pattern.forward, store, cfg)?;
            }
            let recovery = match (report.verdict, report.region) {
                (Verdict::Adversarial, Some(region)) => {
                    let mut r = recover_image(net, input, &region)?;
                    r.old_confidence = Some(report.confidence);
                    Some(r)
                }
                _ => None,
            };
            report.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
            Ok(finish(report, recovery))
        }
        Modality::Audio => {
            let started = std::time::Instant::now();
            let (mut report, forward) = inspect_audio(net, input, store, cfg.audio_threshold)?;
            let recovery = if report.verdict == Verdict::Adversarial {
                Some(recover_audio(net, &forward, store, report.predicted, cfg.k)?)
            } else {
                None
            };
            report.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
            Ok(finish(report, recovery))
        }
    }
}

fn finish(report: DetectionReport, recovery: Option<RecoveryOutcome>) -> DefenseOutcome {
    DefenseOutcome {
        label: recovery.as_ref().map_or(report.predicted, |r| r.predicted),
        report,
        recovery,
    }
}

fn combine_activation_check<N: Network + ?Sized>(
    net: &N,
    report: &mut DetectionReport,
    forward: &crate::nn::ForwardOutput,
    store: &ProfileStore,
    cfg: &DefenseConfig,
) -> Result<()> {
    let last = net.graph().last_conv_activation()?;
    let profile = store.audio(report.predicted)?;
    let observed = crate::signal::ActivationDistribution::from_activations(&forward.taps[&last]);
    report.modality = Modality::Combined;
    match pearson_inconsistency(observed.values(), profile.expected.values()) {
        Ok(d) => {
            report.activation_check = Some((d, cfg.audio_threshold));
            if d > cfg.audio_threshold && report.verdict == Verdict::Natural {
                report.verdict = Verdict::Adversarial;
            }
        }
        Err(Error::Degenerate(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_is_strictly_above_threshold() {
        assert_eq!(Verdict::from_score(0.46, 0.46), Verdict::Natural);
        assert_eq!(Verdict::from_score(0.4601, 0.46), Verdict::Adversarial);
        assert_eq!(Verdict::from_score(0.0, -1.0), Verdict::Adversarial);
        assert_eq!(Verdict::from_score(1.0, 1.0), Verdict::Natural);
    }

    #[test]
    fn published_defaults() {
        let cfg = DefenseConfig::default();
        assert_eq!(cfg.image_threshold, 0.46);
        assert_eq!(cfg.audio_threshold, 0.11);
        assert_eq!(cfg.k, 6);
    }
}
