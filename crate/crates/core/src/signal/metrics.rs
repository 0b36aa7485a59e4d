//! Inconsistency metrics between an observed pattern and a class reference.

use crate::error::{Error, Result};
use crate::signal::spectrum::BinarySpectrum;
use crate::tensor::Tensor;

/// Activation magnitudes of one layer, flattened channel-major then row then column.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDistribution(Vec<f32>);

impl ActivationDistribution {
    /// Absolute values of a tapped activation tensor, in its row-major order.
    pub fn from_activations(taps: &Tensor) -> Self {
        Self(taps.data().iter().map(|v| v.abs()).collect())
    }

    pub fn from_magnitudes(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidTensor(
                "activation magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices of the `k` largest entries, largest first; ties go to the lower index.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

/// `1 - |A ∩ B| / |A ∪ B|`. Two empty masks are considered consistent (0).
pub fn jaccard_inconsistency(a: &BinarySpectrum, b: &BinarySpectrum) -> Result<f64> {
    if a.dims() != b.dims() {
        let (ar, ac) = a.dims();
        let (br, bc) = b.dims();
        return Err(Error::DimMismatch(vec![ar, ac], vec![br, bc]));
    }
    let (mut union, mut inter) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        union += (x || y) as usize;
        inter += (x && y) as usize;
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok((union - inter) as f64 / union as f64)
}

const MIN_VARIANCE: f64 = 1e-12;

/// `1 - PCC(observed, expected)` with population moments. Lies in `[0, 2]`.
pub fn pearson_inconsistency(observed: &[f32], expected: &[f32]) -> Result<f64> {
    if observed.len() != expected.len() {
        return Err(Error::DimMismatch(vec![observed.len()], vec![expected.len()]));
    }
    if observed.len() < 2 {
        return Err(Error::Degenerate("need at least two activations".into()));
    }
    let n = observed.len() as f64;
    let mean = |v: &[f32]| v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let (mo, me) = (mean(observed), mean(expected));
    let (mut cov, mut vo, mut ve) = (0f64, 0f64, 0f64);
    for (&o, &e) in observed.iter().zip(expected) {
        let (d_o, d_e) = (o as f64 - mo, e as f64 - me);
        cov += d_o * d_e;
        vo += d_o * d_o;
        ve += d_e * d_e;
    }
    let (cov, vo, ve) = (cov / n, vo / n, ve / n);
    if vo <= MIN_VARIANCE || ve <= MIN_VARIANCE {
        return Err(Error::Degenerate(format!(
            "zero-variance activations (variances {vo:e}, {ve:e})"
        )));
    }
    let pcc = (cov / (vo.sqrt() * ve.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - pcc)
}
