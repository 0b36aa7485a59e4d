//! Seeded synthetic datasets: ten-class 32×32 textures and eight-class
//! synthetic spoken commands.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::defense::neighbor_interpolate;
use crate::error::Result;
use crate::interpret::Region;
use crate::pattern::features_to_input;
use crate::profiles::Sample;
use crate::signal::MfccExtractor;
use crate::tensor::Tensor;

pub const TEXTURE_LABELS: [&str; 10] = [
    "hstripes",
    "vstripes",
    "diagonal",
    "antidiagonal",
    "checker",
    "dots",
    "rings",
    "spokes",
    "hbands",
    "vbands",
];

pub const IMAGE_SIZE: usize = 32;

pub fn texture_labels() -> Vec<String> {
    TEXTURE_LABELS.iter().map(|s| s.to_string()).collect()
}

/// One `[3, 32, 32]` image of `class`: a periodic pattern with random period,
/// phase, center, colors and mild pixel noise, values in `[0, 1]`. Contrast is
/// kept moderate (foreground about 0.25 to 0.45 above background).
pub fn render_texture(class: usize, rng: &mut impl Rng) -> Tensor {
    let period = match class {
        8 | 9 => rng.gen_range(12.0..16.0),
        _ => rng.gen_range(6.0..9.0),
    };
    let w = 2.0 * PI / period;
    let phase = rng.gen_range(0.0..2.0 * PI);
    let (cy, cx) = (rng.gen_range(8.0..24.0), rng.gen_range(8.0..24.0));
    let bg: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.15..0.5));
    let fg: [f32; 3] = std::array::from_fn(|c| bg[c] + rng.gen_range(0.245..0.455));
    let mut img = Tensor::zeros(&[3, IMAGE_SIZE, IMAGE_SIZE]);
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let (fy, fx) = (y as f64, x as f64);
            let s = match class {
                0 | 8 => (w * fy + phase).sin(),
                1 | 9 => (w * fx + phase).sin(),
                2 => (w * (fx + fy) / 2f64.sqrt() + phase).sin(),
                3 => (w * (fx - fy) / 2f64.sqrt() + phase).sin(),
                4 => (w * fx + phase).sin() * (w * fy + phase).sin(),
                5 => (w * fx + phase).sin() + (w * fy + phase).sin() - 1.0,
                6 => (w * (fy - cy).hypot(fx - cx) + phase).sin(),
                _ => (6.0 * (fy - cy).atan2(fx - cx) + phase).sin(),
            };
            let t = (0.5 + 0.5 * s).clamp(0.0, 1.0) as f32;
            for c in 0..3 {
                let noise = rng.gen_range(-0.01f32..0.01);
                img.set3(c, y, x, (bg[c] + t * (fg[c] - bg[c]) + noise).clamp(0.0, 1.0));
            }
        }
    }
    img
}

/// `per_class` images of every class, interleaved by class.
pub fn textures_dataset(per_class: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * TEXTURE_LABELS.len());
    for _ in 0..per_class {
        for class in 0..TEXTURE_LABELS.len() {
            out.push(Sample {
                input: render_texture(class, &mut rng),
                label: class,
            });
        }
    }
    out
}

/// Training-time augmentation with the two local corruptions the defense
/// leaves behind: a mid-gray, lightly textured rectangle (cutout) in a
/// `cutout` fraction of samples, and one pass of 8-neighbor smoothing over a
/// random rectangle in a `smooth` fraction. Rectangle sides range from 4 to
/// 16 pixels.
pub fn region_augment(samples: &mut [Sample], cutout: f64, smooth: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rect = |rng: &mut ChaCha8Rng, h: usize, w: usize| {
        let (bh, bw) = (rng.gen_range(4..=16.min(h)), rng.gen_range(4..=16.min(w)));
        let (top, left) = (rng.gen_range(0..=h - bh), rng.gen_range(0..=w - bw));
        Region {
            top,
            left,
            bottom: top + bh,
            right: left + bw,
        }
    };
    for s in samples {
        let &[c, h, w] = s.input.shape() else { continue };
        if rng.gen_bool(cutout) {
            let r = rect(&mut rng, h, w);
            for ch in 0..c {
                let base = rng.gen_range(0.3f32..0.7);
                for y in r.top..r.bottom {
                    for x in r.left..r.right {
                        let v = base + rng.gen_range(-0.1f32..0.1);
                        s.input.set3(ch, y, x, v.clamp(0.0, 1.0));
                    }
                }
            }
        }
        if rng.gen_bool(smooth) {
            let r = rect(&mut rng, h, w);
            if let Ok(t) = neighbor_interpolate(&s.input, &r) {
                s.input = t;
            }
        }
    }
}

pub const COMMAND_LABELS: [&str; 8] = ["hum", "rise", "fall", "up", "down", "hiss", "buzz", "warble"];

pub const SAMPLE_RATE: u32 = 16_000;
/// Clip length in samples (0.5 s).
pub const CLIP_LEN: usize = 8_000;

pub fn command_labels() -> Vec<String> {
    COMMAND_LABELS.iter().map(|s| s.to_string()).collect()
}

/// One 0.5 s clip of `class` with random pitch, timing, loudness and
/// background noise, samples in `[-1, 1]`.
pub fn render_command(class: usize, rng: &mut impl Rng) -> Vec<f32> {
    let sr = SAMPLE_RATE as f64;
    let pitch = rng.gen_range(0.9..1.1);
    let amp = rng.gen_range(0.3..0.8);
    let start = rng.gen_range(0.02..0.1);
    let end = rng.gen_range(0.4..0.48);
    let noise = Normal::new(0.0, rng.gen_range(0.005..0.02)).expect("positive std");
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(CLIP_LEN);
    for n in 0..CLIP_LEN {
        let t = n as f64 / sr;
        let mut s = 0.0;
        if t >= start && t < end {
            let r = (t - start) / (end - start);
            let env = (r * PI).sin().powf(0.3);
            let freq = pitch
                * match class {
                    0 => 400.0,
                    1 => 300.0 + 1700.0 * r,
                    2 => 2000.0 - 1700.0 * r,
                    3 => {
                        if r < 0.5 {
                            600.0
                        } else {
                            1500.0
                        }
                    }
                    4 => {
                        if r < 0.5 {
                            1500.0
                        } else {
                            600.0
                        }
                    }
                    6 => 200.0,
                    7 => 1000.0,
                    _ => 0.0,
                };
            phase += 2.0 * PI * freq / sr;
            s = env
                * match class {
                    5 => rng.gen_range(-1.0..1.0),
                    6 => (1..=5).map(|h| (phase * h as f64).sin() / h as f64).sum::<f64>() / 1.5,
                    7 => phase.sin() * (0.5 + 0.5 * (2.0 * PI * 8.0 * t).sin()),
                    _ => phase.sin(),
                };
        }
        out.push(((amp * s + noise.sample(rng)) as f32).clamp(-1.0, 1.0));
    }
    out
}

/// `per_class` clips of every class, interleaved by class.
pub fn command_waveforms(per_class: usize, seed: u64) -> Vec<(Vec<f32>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * COMMAND_LABELS.len());
    for _ in 0..per_class {
        for class in 0..COMMAND_LABELS.len() {
            out.push((render_command(class, &mut rng), class));
        }
    }
    out
}

/// MFCC features of every clip, laid out as model inputs.
pub fn command_dataset(per_class: usize, seed: u64, mfcc: &MfccExtractor) -> Result<Vec<Sample>> {
    command_waveforms(per_class, seed)
        .into_iter()
        .map(|(w, label)| {
            Ok(Sample {
                input: features_to_input(&mfcc.extract(&w)?)?,
                label,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_deterministic_and_in_range() {
        let a = textures_dataset(2, 9);
        assert_eq!(a, textures_dataset(2, 9));
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|s| s.input.data().iter().all(|v| (0.0..=1.0).contains(v))));
        assert_ne!(a, textures_dataset(2, 10));
    }

    #[test]
    fn every_texture_has_contrast() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for class in 0..10 {
            let img = render_texture(class, &mut rng);
            let red = &img.data()[..1024];
            let (lo, hi) = red.iter().fold((1f32, 0f32), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            assert!(hi - lo > 0.2, "class {class} spans {lo}..{hi}");
        }
    }

    #[test]
    fn commands_are_bounded() {
        let clips = command_waveforms(1, 4);
        assert_eq!(clips.len(), 8);
        for (w, _) in &clips {
            assert_eq!(w.len(), CLIP_LEN);
            assert!(w.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
