//! Profile container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        "LNCP"
//! version      u16 (= 1)
//! fingerprint  u64, model hash (see [`fingerprint`])
//! config       u32 n_samples, f64 alpha, u32 crop_size, u32 k
//! records      u32 count, then per record, ordered by class then kind:
//!                u32 class, u32 label byte length + UTF-8 label,
//!                u8 kind (0 = binary spectrum, 1 = activation distribution),
//!                u32 sample count, then
//!                kind 0: u32 rows, u32 cols, ceil(rows*cols/8) bytes of bits,
//!                        row-major, least significant bit first
//!                kind 1: u32 length, length × f32, u32 k, k × u32 indices
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{save_model, ModelGraph, Reader};
use crate::profiles::{AudioClassProfile, ImageClassProfile, ProfileConfig};
use crate::signal::{ActivationDistribution, BinarySpectrum};

pub const PROFILE_MAGIC: &[u8; 4] = b"LNCP";
pub const PROFILE_VERSION: u16 = 1;

/// First eight bytes (little-endian) of the SHA-256 of the serialized model.
pub fn fingerprint(model: &ModelGraph) -> u64 {
    let digest = Sha256::digest(save_model(model));
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ClassEntry {
    label: String,
    image: Option<ImageClassProfile>,
    audio: Option<AudioClassProfile>,
}

/// Reference data for every class of one model.
#[derive(Debug, Clone)]
pub struct ProfileStore {
    fingerprint: u64,
    config: ProfileConfig,
    labels: Vec<String>,
    entries: BTreeMap<usize, ClassEntry>,
}

impl PartialEq for ProfileStore {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint && self.config == other.config && self.entries == other.entries
    }
}

impl ProfileStore {
    pub fn new(model: &ModelGraph, config: ProfileConfig) -> Self {
        Self {
            fingerprint: fingerprint(model),
            config,
            labels: model.labels().to_vec(),
            entries: BTreeMap::new(),
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn config(&self) -> &ProfileConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries
            .values()
            .map(|e| e.image.is_some() as usize + e.audio.is_some() as usize)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn entry(&mut self, class: usize) -> &mut ClassEntry {
        let label = self.labels.get(class).cloned().unwrap_or_default();
        self.entries.entry(class).or_insert_with(|| ClassEntry {
            label,
            ..ClassEntry::default()
        })
    }

    pub fn insert_image(&mut self, profile: ImageClassProfile) {
        let class = profile.class;
        self.entry(class).image = Some(profile);
    }

    pub fn insert_audio(&mut self, profile: AudioClassProfile) {
        let class = profile.class;
        self.entry(class).audio = Some(profile);
    }

    pub fn image(&self, class: usize) -> Result<&ImageClassProfile> {
        self.entries
            .get(&class)
            .and_then(|e| e.image.as_ref())
            .ok_or(Error::MissingProfile(class))
    }

    pub fn audio(&self, class: usize) -> Result<&AudioClassProfile> {
        self.entries
            .get(&class)
            .and_then(|e| e.audio.as_ref())
            .ok_or(Error::MissingProfile(class))
    }

    pub fn image_profiles(&self) -> impl Iterator<Item = &ImageClassProfile> {
        self.entries.values().filter_map(|e| e.image.as_ref())
    }

    pub fn audio_profiles(&self) -> impl Iterator<Item = &AudioClassProfile> {
        self.entries.values().filter_map(|e| e.audio.as_ref())
    }

    /// Detection is only permitted against the model the store was built for,
    /// with a profile for every class.
    pub fn check_serving(&self, model: &ModelGraph) -> Result<()> {
        let serving = fingerprint(model);
        if serving != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                stored: self.fingerprint,
                serving,
            });
        }
        Ok(())
    }

    pub fn check_image_coverage(&self, classes: usize) -> Result<()> {
        (0..classes).try_for_each(|c| self.image(c).map(|_| ()))
    }

    pub fn check_audio_coverage(&self, classes: usize) -> Result<()> {
        (0..classes).try_for_each(|c| self.audio(c).map(|_| ()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PROFILE_MAGIC);
        out.extend_from_slice(&PROFILE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        put_u32(&mut out, self.config.n_samples);
        out.extend_from_slice(&self.config.alpha.to_le_bytes());
        put_u32(&mut out, self.config.crop_size);
        put_u32(&mut out, self.config.k);
        put_u32(&mut out, self.len());
        for (&class, e) in &self.entries {
            if let Some(p) = &e.image {
                record_header(&mut out, class, &e.label, 0, p.samples);
                let (rows, cols) = p.expected.dims();
                put_u32(&mut out, rows);
                put_u32(&mut out, cols);
                for chunk in p.expected.bits().chunks(8) {
                    let byte = chunk
                        .iter()
                        .enumerate()
                        .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
                    out.push(byte);
                }
            }
            if let Some(p) = &e.audio {
                record_header(&mut out, class, &e.label, 1, p.samples);
                put_u32(&mut out, p.expected.len());
                for &v in p.expected.values() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                put_u32(&mut out, p.k());
                for &i in &p.top_k {
                    put_u32(&mut out, i);
                }
            }
        }
        out
    }

    /// Parses a store without checking it against any model.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, Error::MalformedProfiles);
        if r.take(4)? != PROFILE_MAGIC {
            return Err(Error::MalformedProfiles("bad magic".into()));
        }
        let version = r.u16()?;
        if version != PROFILE_VERSION {
            return Err(Error::VersionMismatch {
                expected: PROFILE_VERSION,
                found: version,
            });
        }
        let fingerprint = r.u64()?;
        let n_samples = r.usize()?;
        let alpha = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let crop_size = r.usize()?;
        let k = r.usize()?;
        let config = ProfileConfig {
            n_samples,
            alpha,
            crop_size,
            k,
        };
        let mut store = Self {
            fingerprint,
            config,
            labels: Vec::new(),
            entries: BTreeMap::new(),
        };
        let count = r.usize()?;
        let mut last_key = None;
        for _ in 0..count {
            let class = r.usize()?;
            let len = r.usize()?;
            let label = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::MalformedProfiles("label is not UTF-8".into()))?
                .to_owned();
            let kind = r.u8()?;
            if last_key.is_some_and(|prev| prev >= (class, kind)) {
                return Err(Error::MalformedProfiles("records out of order or duplicated".into()));
            }
            last_key = Some((class, kind));
            let samples = r.usize()?;
            let entry = store.entries.entry(class).or_default();
            if !entry.label.is_empty() && entry.label != label {
                return Err(Error::MalformedProfiles(format!(
                    "class {class} has conflicting labels"
                )));
            }
            entry.label = label;
            match kind {
                0 => {
                    let rows = r.usize()?;
                    let cols = r.usize()?;
                    let n = rows
                        .checked_mul(cols)
                        .ok_or_else(|| Error::MalformedProfiles("mask too large".into()))?;
                    let raw = r.take(n.div_ceil(8))?;
                    let bits = (0..n).map(|i| raw[i / 8] >> (i % 8) & 1 == 1).collect();
                    let expected =
                        BinarySpectrum::new(rows, cols, bits).map_err(|e| Error::MalformedProfiles(e.to_string()))?;
                    entry.image = Some(ImageClassProfile {
                        class,
                        expected,
                        samples,
                    });
                }
                1 => {
                    let len = r.usize()?;
                    let values = r.f32s(len)?;
                    let k = r.usize()?;
                    let top_k = (0..k).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
                    let expected = ActivationDistribution::from_magnitudes(values)
                        .map_err(|e| Error::MalformedProfiles(e.to_string()))?;
                    let profile = AudioClassProfile::new(class, expected, k, samples)
                        .map_err(|e| Error::MalformedProfiles(e.to_string()))?;
                    if profile.top_k != top_k {
                        return Err(Error::MalformedProfiles(format!(
                            "class {class}: stored top-k indices disagree with the distribution"
                        )));
                    }
                    entry.audio = Some(profile);
                }
                other => return Err(Error::MalformedProfiles(format!("unknown record kind {other}"))),
            }
        }
        r.finish()?;
        Ok(store)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn record_header(out: &mut Vec<u8>, class: usize, label: &str, kind: u8, samples: usize) {
    put_u32(out, class);
    put_u32(out, label.len());
    out.extend_from_slice(label.as_bytes());
    out.push(kind);
    put_u32(out, samples);
}

pub fn save_profiles(store: &ProfileStore, path: &Path) -> Result<()> {
    std::fs::write(path, store.to_bytes())?;
    Ok(())
}

/// Reads a store and rejects it unless it was built for `model`.
pub fn load_profiles(path: &Path, model: &ModelGraph) -> Result<ProfileStore> {
    let store = ProfileStore::from_bytes(&std::fs::read(path)?)?;
    store.check_serving(model)?;
    Ok(store)
}
