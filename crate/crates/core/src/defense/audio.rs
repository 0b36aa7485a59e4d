use std::time::Instant;

use crate::defense::{DetectionReport, Modality, Recovered, RecoveryOutcome, Verdict};
use crate::error::{Error, Result};
use crate::nn::{ForwardOutput, Network};
use crate::pattern::{activation_pattern, features_to_input};
use crate::profiles::ProfileStore;
use crate::signal::{pearson_inconsistency, MfccExtractor};
use crate::tensor::Tensor;

/// Audio self-check on model-ready features: one forward pass, then the
/// activation-correlation comparison.
pub fn detect_audio<N: Network + ?Sized>(
    net: &N,
    features: &Tensor,
    store: &ProfileStore,
    threshold: f64,
) -> Result<DetectionReport> {
    inspect_audio(net, features, store, threshold).map(|(r, _)| r)
}

/// MFCC extraction followed by [`detect_audio`].
pub fn detect_audio_waveform<N: Network + ?Sized>(
    net: &N,
    waveform: &[f32],
    store: &ProfileStore,
    threshold: f64,
    mfcc: &MfccExtractor,
) -> Result<DetectionReport> {
    let input = features_to_input(&mfcc.extract(waveform)?)?;
    detect_audio(net, &input, store, threshold)
}

/// Like [`detect_audio`] but also returns the forward output (with the last
/// convolution tapped) for recovery.
pub fn inspect_audio<N: Network + ?Sized>(
    net: &N,
    features: &Tensor,
    store: &ProfileStore,
    threshold: f64,
) -> Result<(DetectionReport, ForwardOutput)> {
    let started = Instant::now();
    store.check_audio_coverage(net.graph().num_classes())?;
    let (forward, observed) = activation_pattern(net, features)?;
    let predicted = forward.predicted;
    let profile = store.audio(predicted)?;
    let (inconsistency, verdict) = match pearson_inconsistency(observed.values(), profile.expected.values()) {
        Ok(d) => (Some(d), Verdict::from_score(d, threshold)),
        Err(Error::Degenerate(_)) => (None, Verdict::Indeterminate),
        Err(e) => return Err(e),
    };
    let flagged = (verdict == Verdict::Adversarial).then(|| profile.top_k.clone());
    let report = DetectionReport {
        modality: Modality::Audio,
        predicted,
        confidence: forward.confidence(),
        inconsistency,
        threshold,
        verdict,
        region: None,
        flagged,
        activation_check: None,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((report, forward))
}

/// Zeroes the given flat positions.
pub fn suppress_activations(activations: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let mut out = activations.clone();
    for &i in indices {
        *out.data_mut()
            .get_mut(i)
            .ok_or_else(|| Error::InvalidConfig(format!("activation index {i} out of range")))? = 0.0;
    }
    Ok(out)
}

/// Suppresses the `k` strongest profile positions of `wrong_class` in the
/// tapped last-convolution output and re-runs only the layers after it.
pub fn recover_audio<N: Network + ?Sized>(
    net: &N,
    original: &ForwardOutput,
    store: &ProfileStore,
    wrong_class: usize,
    k: usize,
) -> Result<RecoveryOutcome> {
    let last = net.graph().last_conv_activation()?;
    let taps = original
        .taps
        .get(&last)
        .ok_or_else(|| Error::InvalidConfig("forward output lacks the last convolution tap".into()))?;
    let profile = store.audio(wrong_class)?;
    if k > profile.expected.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds the {} profiled activations",
            profile.expected.len()
        )));
    }
    let denoised = suppress_activations(taps, &profile.expected.top_k(k))?;
    let out = net.forward_after(last, &denoised)?;
    Ok(RecoveryOutcome {
        predicted: out.predicted,
        old_confidence: Some(original.confidence()),
        new_confidence: out.confidence(),
        recovered: Recovered::Activations(denoised),
    })
}
