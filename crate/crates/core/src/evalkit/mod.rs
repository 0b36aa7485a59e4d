//! Datasets, toy models and the evaluation harness.

mod dataset;
mod eval;
mod synth;
mod train;

pub use dataset::{
    decode_tensor, encode_tensor, load_dataset, read_tensor, save_dataset, write_tensor, LABEL_INDEX, TENSOR_MAGIC,
};
pub use eval::{
    auc, calibrate_threshold, evaluate, median, per_input_rng, roc_curve, threshold_sweep, Attack, EvalConfig,
    EvalReport, InputRecord, RocPoint, SetKind,
};
pub use synth::{
    command_dataset, command_labels, command_waveforms, region_augment, render_command, render_texture, texture_labels,
    textures_dataset, CLIP_LEN, COMMAND_LABELS, IMAGE_SIZE, SAMPLE_RATE, TEXTURE_LABELS,
};
pub use train::{
    accuracy, audio_toy_model, channel_stats, fold_normalization, image_toy_model, normalize, train, TrainConfig,
    TrainReport, AUDIO_FEATURES,
};
