//! Analytic operation counts for the defense pipeline.
//!
//! Counts are exact integer functions of layer shapes. Inference counts one
//! unit per multiply-accumulate of every convolution and dense layer by
//! default (`flops_per_mac = 1`), which is how the published 15,300M figure for
//! VGG-16 at 224×224 is obtained; set `flops_per_mac = 2` to count the multiply
//! and the add separately. Pooling, ReLU and softmax are not counted.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Architecture, LayerDesc};

/// Published totals quoted next to estimates, in FLOPs.
pub const REFERENCE_IMAGE_VGG16: u64 = 15_300_000_000;
pub const REFERENCE_AUDIO_COMMAND: u64 = 500_000_000;
/// Competing defenses, quoted as published; no formula is given for them.
pub const BASELINE_IMAGE_LOCAL_GRADIENT: u64 = 18_300_000_000;
pub const BASELINE_AUDIO: [u64; 2] = [1_100_000_000, 1_600_000_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub flops_per_mac: u64,
    /// Operations per point per radix-2 stage of a complex FFT.
    pub fft_factor: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            flops_per_mac: 1,
            fft_factor: 5,
        }
    }
}

/// `Σ_i Σ_j r_ij² · n_{i-1} · h_ij · w_ij` over every filter `j` of every
/// convolution `i` (dense layers count as 1×1 filters on a 1×1 map).
pub fn flops_inference(arch: &Architecture, cm: &CostModel) -> Result<u64> {
    flops_layers(arch, 0..arch.layers.len(), cm)
}

fn flops_layers(arch: &Architecture, range: std::ops::Range<usize>, cm: &CostModel) -> Result<u64> {
    let shapes = arch.layer_shapes()?;
    let mut total = 0u64;
    for i in range {
        let out = &shapes[i];
        match arch.layers[i] {
            LayerDesc::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let (h, w) = (out[1] as u64, out[2] as u64);
                for _filter in 0..out_channels {
                    total += (kernel.0 * kernel.1) as u64 * in_channels as u64 * h * w;
                }
            }
            LayerDesc::Dense { inputs, outputs } => {
                for _unit in 0..outputs {
                    total += inputs as u64;
                }
            }
            _ => {}
        }
    }
    Ok(total * cm.flops_per_mac)
}

/// Cost of one layer given its input shape.
pub fn layer_flops(desc: &LayerDesc, input_shape: &[usize], cm: &CostModel) -> Result<u64> {
    let out = desc
        .output_shape(input_shape)
        .map_err(|reason| crate::error::Error::InvalidLayer { index: 0, reason })?;
    let macs = match *desc {
        LayerDesc::Conv2d { .. } => desc.weight_len() as u64 * out[1] as u64 * out[2] as u64,
        LayerDesc::Dense { .. } => desc.weight_len() as u64,
        _ => 0,
    };
    Ok(macs * cm.flops_per_mac)
}

/// `K · h · w` additions over the last convolution's output.
pub fn flops_cam(arch: &Architecture) -> Result<u64> {
    let Some(last) = arch.last_conv else {
        return Ok(0);
    };
    let shapes = arch.layer_shapes()?;
    Ok(shapes[last].iter().map(|&d| d as u64).product())
}

fn log2_ceil(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

/// `fft_factor · N · log2 N` for the zero-padded grid of `dims`.
pub fn flops_fft(dims: (usize, usize), cm: &CostModel) -> u64 {
    let n = (dims.0.next_power_of_two() * dims.1.next_power_of_two()) as u64;
    cm.fft_factor * n * log2_ceil(n)
}

/// `n · log2 n` for comparing two masks of `n` bits.
pub fn flops_jsc(bits: usize) -> u64 {
    bits as u64 * log2_ceil(bits as u64)
}

/// Eight additions and one division per repaired pixel.
pub fn flops_interpolation(pixels: usize) -> u64 {
    9 * pixels as u64
}

/// `n²` for the correlation of two `n`-element activation vectors.
pub fn flops_pcc(len: usize) -> u64 {
    (len as u64).pow(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    Image {
        /// Pixels (times channels) repaired by interpolation.
        repaired_pixels: usize,
        /// Side of the square crop fed to the FFT.
        crop_size: usize,
        recover: bool,
    },
    Audio {
        recover: bool,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// All full CNN inference passes.
    pub inference: u64,
    pub inference_passes: u32,
    pub cam: u64,
    pub fft: u64,
    pub jaccard: u64,
    pub interpolation: u64,
    pub pcc: u64,
    /// Layers after the last convolution, re-run on denoised activations.
    pub head: u64,
    pub total: u64,
}

impl CostBreakdown {
    pub fn inference_share(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.inference as f64 / self.total as f64
        }
    }

    pub fn components(&self) -> [(&'static str, u64); 7] {
        [
            ("inference", self.inference),
            ("cam", self.cam),
            ("fft", self.fft),
            ("jaccard", self.jaccard),
            ("interpolation", self.interpolation),
            ("pcc", self.pcc),
            ("head", self.head),
        ]
    }
}

pub fn pipeline_cost(arch: &Architecture, scenario: Scenario, cm: &CostModel) -> Result<CostBreakdown> {
    let one_pass = flops_inference(arch, cm)?;
    let mut b = CostBreakdown::default();
    match scenario {
        Scenario::Image {
            repaired_pixels,
            crop_size,
            recover,
        } => {
            b.inference_passes = 1 + recover as u32;
            b.inference = one_pass * b.inference_passes as u64;
            b.cam = flops_cam(arch)?;
            b.fft = flops_fft((crop_size, crop_size), cm);
            b.jaccard = flops_jsc(crop_size * crop_size);
            if recover {
                b.interpolation = flops_interpolation(repaired_pixels);
            }
        }
        Scenario::Audio { recover } => {
            b.inference_passes = 1;
            b.inference = one_pass;
            if let Some(last) = arch.last_conv {
                let shapes = arch.layer_shapes()?;
                b.pcc = flops_pcc(shapes[last].iter().product());
                if recover {
                    b.head = flops_layers(arch, last + 1..arch.layers.len(), cm)?;
                }
            }
        }
    }
    b.total = b.components().iter().map(|(_, v)| v).sum();
    Ok(b)
}

/// VGG-16 (configuration D) layer table for 224×224 RGB input, 1000 classes.
pub fn vgg16() -> Architecture {
    let mut layers = Vec::new();
    let mut channels = 3;
    let mut last_conv = 0;
    for block in [
        &[64, 64][..],
        &[128, 128],
        &[256, 256, 256],
        &[512, 512, 512],
        &[512, 512, 512],
    ] {
        for &out in block {
            last_conv = layers.len();
            layers.push(LayerDesc::Conv2d {
                in_channels: channels,
                out_channels: out,
                kernel: (3, 3),
                stride: (1, 1),
                padding: (1, 1),
            });
            layers.push(LayerDesc::Relu);
            channels = out;
        }
        layers.push(LayerDesc::MaxPool2d {
            window: (2, 2),
            stride: (2, 2),
        });
    }
    for (inputs, outputs) in [(512 * 7 * 7, 4096), (4096, 4096), (4096, 1000)] {
        layers.push(LayerDesc::Dense { inputs, outputs });
        if outputs != 1000 {
            layers.push(LayerDesc::Relu);
        }
    }
    layers.push(LayerDesc::Softmax);
    Architecture {
        input_shape: vec![3, 224, 224],
        layers,
        last_conv: Some(last_conv),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_conv() -> Architecture {
        Architecture {
            input_shape: vec![1, 6, 6],
            layers: vec![LayerDesc::Conv2d {
                in_channels: 1,
                out_channels: 1,
                kernel: (3, 3),
                stride: (1, 1),
                padding: (0, 0),
            }],
            last_conv: Some(0),
        }
    }

    #[test]
    fn single_conv_counts() {
        assert_eq!(flops_inference(&single_conv(), &CostModel::default()).unwrap(), 144);
        let two = CostModel {
            flops_per_mac: 2,
            ..CostModel::default()
        };
        assert_eq!(flops_inference(&single_conv(), &two).unwrap(), 288);
    }

    #[test]
    fn empty_model_is_free() {
        let arch = Architecture {
            input_shape: vec![3, 8, 8],
            layers: vec![],
            last_conv: None,
        };
        assert_eq!(flops_inference(&arch, &CostModel::default()).unwrap(), 0);
        assert_eq!(flops_cam(&arch).unwrap(), 0);
    }

    #[test]
    fn small_step_formulas() {
        let cm = CostModel::default();
        assert_eq!(flops_fft((1, 1), &cm), 0);
        assert_eq!(flops_fft((32, 32), &cm), 51_200);
        assert!(flops_fft((64, 64), &cm) > 2 * flops_fft((32, 45), &cm));
        assert_eq!(flops_interpolation(0), 0);
        assert_eq!(flops_interpolation(1), 9);
        assert_eq!(flops_interpolation(100), 900);
        assert_eq!(flops_pcc(1), 1);
        assert_eq!(flops_pcc(100), 10_000);
    }

    #[test]
    fn cam_cost_is_feature_map_size() {
        let arch = Architecture {
            input_shape: vec![1, 7, 7],
            layers: vec![LayerDesc::Conv2d {
                in_channels: 1,
                out_channels: 512,
                kernel: (1, 1),
                stride: (1, 1),
                padding: (0, 0),
            }],
            last_conv: Some(0),
        };
        assert_eq!(flops_cam(&arch).unwrap(), 25_088);
        assert_eq!(flops_cam(&single_conv()).unwrap(), 16);
    }

    #[test]
    fn vgg16_shapes_compose() {
        let arch = vgg16();
        let shapes = arch.layer_shapes().unwrap();
        assert_eq!(shapes[arch.last_conv.unwrap()], vec![512, 14, 14]);
        assert_eq!(shapes.last().unwrap(), &vec![1000]);
    }
}
