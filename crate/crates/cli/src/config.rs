//! Run configuration: a flat `key = value` file, then command-line overrides.
//!
//! ```text
//! # comments and blank lines are ignored
//! modality = audio
//! audio_threshold = 0.11
//! k = 6
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use vigil::defense::{
    DefenseConfig, Modality, DEFAULT_ALPHA, DEFAULT_AUDIO_THRESHOLD, DEFAULT_IMAGE_THRESHOLD, DEFAULT_TOP_K,
};
use vigil::profiles::ProfileConfig;
use vigil::signal::MfccConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub modality: Modality,
    pub model: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub image_threshold: f64,
    pub audio_threshold: f64,
    pub alpha: f64,
    pub k: usize,
    pub n_samples: usize,
    pub crop_size: usize,
    pub mfcc: MfccConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Eval worker threads; 0 lets the pool pick.
    pub workers: usize,
    /// Record per-input defense time. Off keeps reruns byte-identical.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let profile = ProfileConfig::default();
        Self {
            modality: Modality::Image,
            model: None,
            profiles: None,
            image_threshold: DEFAULT_IMAGE_THRESHOLD,
            audio_threshold: DEFAULT_AUDIO_THRESHOLD,
            alpha: DEFAULT_ALPHA,
            k: DEFAULT_TOP_K,
            n_samples: profile.n_samples,
            crop_size: profile.crop_size,
            mfcc: MfccConfig::default(),
            seed: 0,
            out: None,
            workers: 0,
            timing: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "modality",
    "model",
    "profiles",
    "image_threshold",
    "audio_threshold",
    "alpha",
    "k",
    "n_samples",
    "crop_size",
    "mfcc_sample_rate",
    "mfcc_frame_len",
    "mfcc_hop",
    "mfcc_mel_bands",
    "mfcc_coefficients",
    "mfcc_fft_size",
    "seed",
    "out",
    "workers",
    "timing",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

pub fn parse_modality(value: &str) -> Result<Modality> {
    match value {
        "image" => Ok(Modality::Image),
        "audio" => Ok(Modality::Audio),
        "combined" => Ok(Modality::Combined),
        other => bail!("unknown modality {other:?} (image, audio, combined)"),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "modality" => self.modality = parse_modality(value)?,
            "model" => self.model = Some(value.into()),
            "profiles" => self.profiles = Some(value.into()),
            "image_threshold" => self.image_threshold = parse(key, value)?,
            "audio_threshold" => self.audio_threshold = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "n_samples" => self.n_samples = parse(key, value)?,
            "crop_size" => self.crop_size = parse(key, value)?,
            "mfcc_sample_rate" => self.mfcc.sample_rate = parse(key, value)?,
            "mfcc_frame_len" => self.mfcc.frame_len = parse(key, value)?,
            "mfcc_hop" => self.mfcc.hop = parse(key, value)?,
            "mfcc_mel_bands" => self.mfcc.mel_bands = parse(key, value)?,
            "mfcc_coefficients" => self.mfcc.coefficients = parse(key, value)?,
            "mfcc_fft_size" => self.mfcc.fft_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = Some(value.into()),
            "workers" => self.workers = parse(key, value)?,
            "timing" => self.timing = parse(key, value)?,
            other => bail!("unknown config key {other:?} (known: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.image_threshold >= 0.0 && self.audio_threshold >= 0.0) {
            bail!("thresholds must be >= 0");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            bail!("alpha must lie in (0, 1], got {}", self.alpha);
        }
        for path in [&self.model, &self.profiles].into_iter().flatten() {
            if !path.exists() {
                bail!("{} does not exist", path.display());
            }
        }
        Ok(())
    }

    pub fn defense(&self) -> DefenseConfig {
        DefenseConfig {
            modality: self.modality,
            image_threshold: self.image_threshold,
            audio_threshold: self.audio_threshold,
            alpha: self.alpha,
            k: self.k,
        }
    }

    pub fn profile(&self) -> ProfileConfig {
        ProfileConfig {
            n_samples: self.n_samples,
            alpha: self.alpha,
            crop_size: self.crop_size,
            k: self.k,
        }
    }

    pub fn model_path(&self) -> Result<&Path> {
        self.model.as_deref().context("no model given (model = ... or --model)")
    }

    pub fn profiles_path(&self) -> Result<&Path> {
        self.profiles
            .as_deref()
            .context("no profile store given (profiles = ... or --profiles)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# audio run\nmodality = audio\n\nk=4\nseed = 9\n")
            .unwrap();
        cfg.set("k", "2").unwrap();
        assert_eq!(cfg.modality, Modality::Audio);
        assert_eq!((cfg.k, cfg.seed), (2, 9));
        assert_eq!(cfg.image_threshold, 0.46);
        assert_eq!(cfg.audio_threshold, 0.11);
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = RunConfig::default();
        for key in KEYS {
            let value = match *key {
                "modality" => "combined",
                "timing" => "true",
                "image_threshold" | "audio_threshold" | "alpha" => "0.5",
                _ => "7",
            };
            cfg.set(key, value).unwrap();
        }
        assert_eq!(cfg.mfcc.hop, 7);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_text("no equals sign").is_err());
        assert!(cfg.set("colour", "red").is_err());
        assert!(cfg.set("k", "-1").is_err());
        assert!(RunConfig::load(None, &[("image_threshold".into(), "-0.1".into())]).is_err());
        assert!(RunConfig::load(None, &[("model".into(), "/nonexistent/m.lncm".into())]).is_err());
    }
}
