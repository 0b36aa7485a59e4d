//! MFCC front end: Hann window, power spectrum, HTK mel filterbank, log, DCT-II.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::fft::fft_in_place;
use crate::tensor::Tensor;

const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub mel_bands: usize,
    pub coefficients: usize,
    pub fft_size: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 400,
            hop: 160,
            mel_bands: 40,
            coefficients: 13,
            fft_size: 512,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("mfcc: {m}")));
        if self.sample_rate == 0 || self.frame_len == 0 || self.hop == 0 {
            return bad("sample rate, frame length and hop must be positive");
        }
        if !self.fft_size.is_power_of_two() || self.frame_len > self.fft_size {
            return bad("fft size must be a power of two no smaller than the frame");
        }
        if self.coefficients == 0 || self.coefficients > self.mel_bands {
            return bad("need 0 < coefficients <= mel bands");
        }
        Ok(())
    }

    /// `1 + floor((samples - frame_len) / hop)`, or `None` for clips shorter than a frame.
    pub fn frame_count(&self, samples: usize) -> Option<usize> {
        (samples >= self.frame_len).then(|| 1 + (samples - self.frame_len) / self.hop)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed window, filterbank and DCT basis for one configuration.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    window: Vec<f64>,
    /// `[band][bin]` weights over bins `0..=fft_size / 2`.
    filters: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.frame_len;
        let window = (0..n)
            .map(|i| {
                if n == 1 {
                    1.0
                } else {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
                }
            })
            .collect();
        let nyquist = cfg.sample_rate as f64 / 2.0;
        let max_mel = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..cfg.mel_bands + 2)
            .map(|i| mel_to_hz(max_mel * i as f64 / (cfg.mel_bands + 1) as f64))
            .collect();
        let bins = cfg.fft_size / 2 + 1;
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
        let filters = (0..cfg.mel_bands)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                    })
                    .collect()
            })
            .collect();
        let m = cfg.mel_bands as f64;
        let dct = (0..cfg.coefficients)
            .map(|q| {
                let scale = if q == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
                (0..cfg.mel_bands)
                    .map(|b| scale * (std::f64::consts::PI * q as f64 * (b as f64 + 0.5) / m).cos())
                    .collect()
            })
            .collect();
        Ok(Self {
            cfg,
            window,
            filters,
            centers_hz: edges[1..=cfg.mel_bands].to_vec(),
            dct,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// Center frequency of every mel band.
    pub fn band_centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Mel filterbank energies (before the log) of one frame of `frame_len` samples.
    pub fn mel_energies(&self, frame: &[f32]) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.fft_size];
        for (slot, (&s, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            *slot = Complex64::new(s as f64 * w, 0.0);
        }
        fft_in_place(&mut buf, false);
        let power: Vec<f64> = buf[..self.cfg.fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        self.filters
            .iter()
            .map(|f| f.iter().zip(&power).map(|(w, p)| w * p).sum())
            .collect()
    }

    pub fn frame_coefficients(&self, frame: &[f32]) -> Vec<f32> {
        let logs: Vec<f64> = self
            .mel_energies(frame)
            .into_iter()
            .map(|e| (e + LOG_FLOOR).ln())
            .collect();
        self.dct
            .iter()
            .map(|basis| basis.iter().zip(&logs).map(|(b, l)| b * l).sum::<f64>() as f32)
            .collect()
    }

    /// `[frames, coefficients]` features of a mono waveform.
    pub fn extract(&self, waveform: &[f32]) -> Result<Tensor> {
        let frames = self.cfg.frame_count(waveform.len()).ok_or_else(|| {
            Error::InvalidTensor(format!(
                "waveform of {} samples is shorter than one {}-sample frame",
                waveform.len(),
                self.cfg.frame_len
            ))
        })?;
        let mut data = Vec::with_capacity(frames * self.cfg.coefficients);
        for f in 0..frames {
            let start = f * self.cfg.hop;
            data.extend(self.frame_coefficients(&waveform[start..start + self.cfg.frame_len]));
        }
        Tensor::new(vec![frames, self.cfg.coefficients], data)
    }
}

/// One-shot MFCC extraction of a rank-1 waveform tensor.
pub fn mfcc(waveform: &Tensor, cfg: &MfccConfig) -> Result<Tensor> {
    if waveform.rank() != 1 {
        return Err(Error::InvalidTensor(format!(
            "waveform must be 1-D, got shape {:?}",
            waveform.shape()
        )));
    }
    MfccExtractor::new(*cfg)?.extract(waveform.data())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        let cfg = MfccConfig::default();
        assert_eq!(cfg.frame_count(16_000), Some(98));
        assert_eq!(cfg.frame_count(400), Some(1));
        assert_eq!(cfg.frame_count(399), None);
    }

    #[test]
    fn silence_gives_identical_frames() {
        let feats = mfcc(&Tensor::zeros(&[4000]), &MfccConfig::default()).unwrap();
        let rows: Vec<&[f32]> = feats.data().chunks(13).collect();
        assert!(rows.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn short_waveform_rejected() {
        assert!(mfcc(&Tensor::zeros(&[100]), &MfccConfig::default()).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = MfccConfig {
            coefficients: 41,
            ..MfccConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MfccConfig {
            fft_size: 256,
            ..MfccConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0, 440.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }
}
