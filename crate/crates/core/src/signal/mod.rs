//! Spectral transforms, the MFCC front end and the inconsistency metrics.

mod fft;
mod metrics;
mod mfcc;
mod spectrum;

pub use fft::{fft2d, fft_in_place, ifft2d, Spectrum};
pub use metrics::{jaccard_inconsistency, pearson_inconsistency, ActivationDistribution};
pub use mfcc::{hz_to_mel, mel_to_hz, mfcc, MfccConfig, MfccExtractor};
pub use spectrum::{binarize_spectrum, BinarySpectrum};
