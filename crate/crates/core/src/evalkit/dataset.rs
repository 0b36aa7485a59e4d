//! On-disk datasets: a directory of raw tensor files plus `labels.tsv`.
//!
//! Tensor file layout (little-endian):
//!
//! ```text
//! magic  b"LNCT"
//! u32    rank
//! u32    dims[rank]
//! f32    data[prod(dims)]     row-major
//! ```
//!
//! `labels.tsv` holds one `file<TAB>label` line per sample, in dataset order;
//! lines starting with `#` are ignored.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Reader;
use crate::profiles::Sample;
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"LNCT";
pub const LABEL_INDEX: &str = "labels.tsv";

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes, Error::InvalidTensor);
    if r.take(4)? != TENSOR_MAGIC {
        return Err(Error::InvalidTensor("bad tensor magic".into()));
    }
    let rank = r.usize()?;
    if rank == 0 || rank > 8 {
        return Err(Error::InvalidTensor(format!("unsupported rank {rank}")));
    }
    let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidTensor(format!("shape {shape:?} overflows")))?;
    let data = r.f32s(n)?;
    r.finish()?;
    Tensor::new(shape, data)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    Ok(fs::write(path, encode_tensor(t))?)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

/// Writes `samples` as `000000.bin`, `000001.bin`, … plus the label index.
pub fn save_dataset(dir: &Path, samples: &[Sample]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::new();
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:06}.bin");
        write_tensor(&dir.join(&name), &s.input)?;
        index.push_str(&format!("{name}\t{}\n", s.label));
    }
    fs::write(dir.join(LABEL_INDEX), index)?;
    Ok(())
}

/// Reads a dataset directory. Empty datasets are an error.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let index_path = dir.join(LABEL_INDEX);
    let index = fs::read_to_string(&index_path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", index_path.display())))?;
    let mut samples = Vec::new();
    for (n, line) in index.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (file, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::Dataset(format!("{LABEL_INDEX}:{}: expected file<TAB>label", n + 1)))?;
        let label = label
            .trim()
            .parse()
            .map_err(|_| Error::Dataset(format!("{LABEL_INDEX}:{}: bad label {label:?}", n + 1)))?;
        samples.push(Sample {
            input: read_tensor(&dir.join(file))?,
            label,
        });
    }
    if samples.is_empty() {
        return Err(Error::Dataset(format!("{} lists no samples", index_path.display())));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip() {
        let t = Tensor::from_fn(&[2, 3, 1], |i| i as f32 - 2.5);
        assert_eq!(decode_tensor(&encode_tensor(&t)).unwrap(), t);
    }

    #[test]
    fn truncated_tensor_rejected() {
        let bytes = encode_tensor(&Tensor::zeros(&[4]));
        assert!(decode_tensor(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_tensor(&extra).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![
            Sample {
                input: Tensor::full(&[1, 2, 2], 0.5),
                label: 3,
            },
            Sample {
                input: Tensor::zeros(&[1, 2, 2]),
                label: 0,
            },
        ];
        save_dataset(dir.path(), &samples).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), samples);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));
        fs::write(dir.path().join(LABEL_INDEX), "# nothing\n").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));
    }
}
