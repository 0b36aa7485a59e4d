//! Activation-level interpretation: activation maximization and class
//! activation mapping with primary-source localization.

mod am;
mod cam;

pub use am::{activation_maximization, am_initialization, AmConfig, AmOutcome};
pub use cam::{cam, localize_primary_region, Heatmap, Region};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Plain-text PGM (P2) of a 2-D map, or of the channel mean of a `[C, H, W]`
/// tensor, scaled so the maximum maps to 255. Negative values clip to 0.
pub fn to_pgm(t: &Tensor) -> Result<String> {
    let (h, w, values): (usize, usize, Vec<f64>) = match *t.shape() {
        [h, w] => (h, w, t.data().iter().map(|&v| v as f64).collect()),
        [c, h, w] => {
            let mut acc = vec![0f64; h * w];
            for plane in t.data().chunks_exact(h * w) {
                for (a, &v) in acc.iter_mut().zip(plane) {
                    *a += v as f64 / c as f64;
                }
            }
            (h, w, acc)
        }
        _ => {
            return Err(Error::InvalidTensor(format!(
                "cannot render shape {:?} as an image",
                t.shape()
            )))
        }
    };
    let max = values.iter().copied().fold(0f64, f64::max);
    let mut s = format!("P2\n{w} {h}\n255\n");
    for row in values.chunks(w) {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let g = if max > 0.0 {
                    (v / max * 255.0).round().clamp(0.0, 255.0)
                } else {
                    0.0
                };
                (g as u8).to_string()
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    Ok(s)
}

impl Heatmap {
    pub fn to_pgm(&self) -> String {
        to_pgm(self.tensor()).expect("heatmaps are 2-D")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_is_max_normalized() {
        let t = Tensor::new(vec![1, 3], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(to_pgm(&t).unwrap(), "P2\n3 1\n255\n0 128 255\n");
    }
}
