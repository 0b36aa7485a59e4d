//! Extraction of the two per-input patterns the self-check compares:
//! the binarized spectrum of the strongest activation source (images) and the
//! last-layer activation magnitudes (audio).

use crate::error::{Error, Result};
use crate::interpret::{cam, localize_primary_region, Region};
use crate::nn::{ForwardOutput, Network};
use crate::signal::{binarize_spectrum, fft2d, ActivationDistribution, BinarySpectrum};
use crate::tensor::Tensor;

/// Result of the single forward pass behind an image check.
#[derive(Debug, Clone)]
pub struct SemanticPattern {
    pub forward: ForwardOutput,
    /// `None` when the heatmap has no positive source.
    pub located: Option<(Region, BinarySpectrum)>,
}

/// Forward pass with the last convolution tapped, then CAM, localization,
/// crop, nearest-neighbor resize to `crop_size`², 2-D FFT and binarization.
pub fn semantic_pattern<N: Network + ?Sized>(
    net: &N,
    image: &Tensor,
    alpha: f64,
    crop_size: usize,
) -> Result<SemanticPattern> {
    let model = net.graph();
    let last = model.last_conv_activation()?;
    let &[_, h, w] = image.shape() else {
        return Err(Error::InvalidTensor(format!(
            "image input must be [C, H, W], got {:?}",
            image.shape()
        )));
    };
    let forward = net.forward(image, &[last])?;
    let heat = cam(&forward.taps[&last])?;
    let stride = model.architecture().total_stride(last);
    let located = match localize_primary_region(&heat, (h, w), stride, alpha) {
        Ok(region) => {
            let crop = crop_gray_resized(image, &region, crop_size)?;
            Some((region, binarize_spectrum(&fft2d(&crop)?)))
        }
        Err(Error::NoPrimarySource) => None,
        Err(e) => return Err(e),
    };
    Ok(SemanticPattern { forward, located })
}

/// Channel-mean of the region, resized (nearest neighbor) to `size × size`.
pub fn crop_gray_resized(image: &Tensor, region: &Region, size: usize) -> Result<Tensor> {
    if size == 0 || !size.is_power_of_two() {
        return Err(Error::InvalidConfig(format!("crop size {size} must be a power of two")));
    }
    let [c, h, w] = [image.shape()[0], image.shape()[1], image.shape()[2]];
    if region.area() == 0 || region.bottom > h || region.right > w {
        return Err(Error::InvalidConfig(format!("region {region:?} outside {h}x{w} image")));
    }
    let (rh, rw) = (region.height(), region.width());
    let out = Tensor::from_fn(&[size, size], |i| {
        let (y, x) = (i / size, i % size);
        let sy = region.top + y * rh / size;
        let sx = region.left + x * rw / size;
        let s: f32 = (0..c).map(|ch| image.at3(ch, sy, sx)).sum();
        s / c as f32
    });
    Ok(out)
}

/// Forward pass with the last convolution tapped; returns its magnitudes.
pub fn activation_pattern<N: Network + ?Sized>(
    net: &N,
    input: &Tensor,
) -> Result<(ForwardOutput, ActivationDistribution)> {
    let last = net.graph().last_conv_activation()?;
    let forward = net.forward(input, &[last])?;
    let dist = ActivationDistribution::from_activations(&forward.taps[&last]);
    Ok((forward, dist))
}

/// Lays out `[frames, coefficients]` MFCC features as a `[coefficients, frames, 1]`
/// model input, so each coefficient is an input channel.
pub fn features_to_input(features: &Tensor) -> Result<Tensor> {
    let &[frames, coeffs] = features.shape() else {
        return Err(Error::InvalidTensor(format!(
            "features must be [frames, coefficients], got {:?}",
            features.shape()
        )));
    };
    let d = features.data();
    Tensor::new(
        vec![coeffs, frames, 1],
        (0..coeffs * frames)
            .map(|i| d[(i % frames) * coeffs + i / frames])
            .collect(),
    )
}
