use std::time::Instant;

use crate::defense::{DetectionReport, Modality, Recovered, RecoveryOutcome, Verdict};
use crate::error::{Error, Result};
use crate::interpret::Region;
use crate::nn::Network;
use crate::pattern::{semantic_pattern, SemanticPattern};
use crate::profiles::ProfileStore;
use crate::signal::jaccard_inconsistency;
use crate::tensor::Tensor;

/// Image self-check: one forward pass, then the semantic-pattern comparison.
pub fn detect_image<N: Network + ?Sized>(
    net: &N,
    image: &Tensor,
    store: &ProfileStore,
    threshold: f64,
    alpha: f64,
) -> Result<DetectionReport> {
    inspect_image(net, image, store, threshold, alpha).map(|(r, _)| r)
}

/// Like [`detect_image`] but also hands back the pattern and forward output.
pub fn inspect_image<N: Network + ?Sized>(
    net: &N,
    image: &Tensor,
    store: &ProfileStore,
    threshold: f64,
    alpha: f64,
) -> Result<(DetectionReport, SemanticPattern)> {
    let started = Instant::now();
    store.check_image_coverage(net.graph().num_classes())?;
    let pattern = semantic_pattern(net, image, alpha, store.config().crop_size)?;
    let predicted = pattern.forward.predicted;
    let (inconsistency, verdict, region) = match &pattern.located {
        Some((region, observed)) => {
            let d = jaccard_inconsistency(observed, &store.image(predicted)?.expected)?;
            (Some(d), Verdict::from_score(d, threshold), Some(*region))
        }
        None => (None, Verdict::Indeterminate, None),
    };
    let report = DetectionReport {
        modality: Modality::Image,
        predicted,
        confidence: pattern.forward.confidence(),
        inconsistency,
        threshold,
        verdict,
        region,
        flagged: None,
        activation_check: None,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((report, pattern))
}

/// Replaces every pixel inside `region` with the mean of its in-bounds
/// 8-neighborhood, read from the unmodified image. Channels are independent.
pub fn neighbor_interpolate(image: &Tensor, region: &Region) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::InvalidTensor(format!(
            "image must be [C, H, W], got {:?}",
            image.shape()
        )));
    };
    if region.area() == 0 || region.bottom > h || region.right > w {
        return Err(Error::InvalidConfig(format!(
            "region {region:?} is empty or outside the {h}x{w} image"
        )));
    }
    if region.area() == h * w {
        return Err(Error::RecoveryImpossible(
            "region covers the whole image, no exterior pixels remain".into(),
        ));
    }
    let mut out = image.clone();
    for ch in 0..c {
        for y in region.top..region.bottom {
            for x in region.left..region.right {
                let mut sum = 0f64;
                let mut n = 0u32;
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if (ny, nx) != (y, x) {
                            sum += image.at3(ch, ny, nx) as f64;
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    out.set3(ch, y, x, (sum / n as f64) as f32);
                }
            }
        }
    }
    Ok(out)
}

/// Interpolates over `region` and classifies the result (one forward pass).
pub fn recover_image<N: Network + ?Sized>(net: &N, image: &Tensor, region: &Region) -> Result<RecoveryOutcome> {
    let recovered = neighbor_interpolate(image, region)?;
    let out = net.forward(&recovered, &[])?;
    Ok(RecoveryOutcome {
        predicted: out.predicted,
        old_confidence: None,
        new_confidence: out.confidence(),
        recovered: Recovered::Image(recovered),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(top: usize, left: usize, bottom: usize, right: usize) -> Region {
        Region {
            top,
            left,
            bottom,
            right,
        }
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Tensor::full(&[3, 6, 6], 0.3);
        assert_eq!(neighbor_interpolate(&img, &region(1, 2, 4, 5)).unwrap(), img);
    }

    #[test]
    fn block_of_ones_in_zero_image() {
        // 3x3 block of ones centered in a 5x5 zero grid; snapshot neighbor means
        let img = Tensor::from_fn(&[1, 5, 5], |i| {
            let (y, x) = (i / 5, i % 5);
            if (1..4).contains(&y) && (1..4).contains(&x) {
                1.0
            } else {
                0.0
            }
        });
        let out = neighbor_interpolate(&img, &region(1, 1, 4, 4)).unwrap();
        let expected = [
            [3.0 / 8.0, 5.0 / 8.0, 3.0 / 8.0],
            [5.0 / 8.0, 8.0 / 8.0, 5.0 / 8.0],
            [3.0 / 8.0, 5.0 / 8.0, 3.0 / 8.0],
        ];
        for (dy, row) in expected.iter().enumerate() {
            for (dx, &e) in row.iter().enumerate() {
                assert!((out.at3(0, dy + 1, dx + 1) - e).abs() < 1e-6);
            }
        }
        assert_eq!(out.at3(0, 0, 0), 0.0);
    }

    #[test]
    fn corner_pixel_uses_three_neighbors() {
        let img = Tensor::new(vec![1, 2, 2], vec![9.0, 1.0, 2.0, 3.0]).unwrap();
        let out = neighbor_interpolate(&img, &region(0, 0, 1, 1)).unwrap();
        assert!((out.at3(0, 0, 0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn whole_image_region_rejected() {
        let img = Tensor::zeros(&[1, 3, 3]);
        assert!(matches!(
            neighbor_interpolate(&img, &region(0, 0, 3, 3)),
            Err(Error::RecoveryImpossible(_))
        ));
        assert!(neighbor_interpolate(&img, &region(0, 0, 4, 1)).is_err());
    }
}
