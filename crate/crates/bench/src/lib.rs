//! Fixtures shared by the benchmarks.

use vigil::evalkit::{command_waveforms, image_toy_model, texture_labels, textures_dataset};
use vigil::pattern::semantic_pattern;
use vigil::profiles::{ImageClassProfile, ProfileConfig, ProfileStore};
use vigil::{ModelGraph, Tensor};

pub const CROP: usize = 16;

/// Untrained toy image model and a store whose every class expects the
/// spectrum of `image`. Timing does not depend on the weights.
pub fn image_fixture() -> (ModelGraph, ProfileStore, Tensor) {
    let model = image_toy_model(texture_labels(), 1).expect("toy model");
    let image = textures_dataset(1, 2).remove(0).input;
    let mask = semantic_pattern(&model, &image, 0.7, CROP)
        .expect("pattern")
        .located
        .expect("active heatmap")
        .1;
    let cfg = ProfileConfig {
        crop_size: CROP,
        ..ProfileConfig::default()
    };
    let mut store = ProfileStore::new(&model, cfg);
    for class in 0..model.num_classes() {
        store.insert_image(ImageClassProfile {
            class,
            expected: mask.clone(),
            samples: 1,
        });
    }
    (model, store, image)
}

pub fn waveform() -> Tensor {
    let (clip, _) = command_waveforms(1, 3).remove(0);
    Tensor::new(vec![clip.len()], clip).expect("1-D clip")
}

pub fn grid(side: usize) -> Tensor {
    Tensor::from_fn(&[side, side], |i| ((i * 37) % 101) as f32 / 100.0)
}
