//! Self-verification and data recovery for CNN classifiers under physical
//! adversarial inputs (image patches and perturbed audio commands).
//!
//! A prediction is checked against per-class reference data captured from
//! natural inputs. Images are checked by comparing the binarized spectrum of
//! the region that drives the last convolutional layer hardest; audio is
//! checked by correlating last-layer activation magnitudes. Inputs that fail
//! the check are repaired (neighbor interpolation for images, activation
//! suppression for audio) and classified again.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod complexity;
pub mod defense;
pub mod error;
pub mod evalkit;
pub mod interpret;
pub mod nn;
pub mod pattern;
pub mod profiles;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
pub use nn::{load_model, save_model, ForwardOutput, ModelGraph, Network, Objective};
pub use tensor::Tensor;
