use crate::error::{Error, Result};
use crate::signal::fft::Spectrum;

/// Bit mask over a centered (DC in the middle) spectrum grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinarySpectrum {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinarySpectrum {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if !rows.is_power_of_two() || !cols.is_power_of_two() {
            return Err(Error::InvalidTensor(format!(
                "binary spectrum dims {rows}x{cols} must be powers of two"
            )));
        }
        if bits.len() != rows * cols {
            return Err(Error::InvalidTensor(format!(
                "{} bits for a {rows}x{cols} mask",
                bits.len()
            )));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn empty(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![false; rows * cols])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Plain-text PGM (P2), 0 or 255 per cell.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.cols, self.rows);
        for row in self.bits.chunks(self.cols) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "255" } else { "0" }).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Log-magnitude spectrum, shifted so DC sits at `(rows / 2, cols / 2)`,
/// thresholded at its mean. The DC cell is always cleared.
pub fn binarize_spectrum(spectrum: &Spectrum) -> BinarySpectrum {
    let (rows, cols) = (spectrum.rows, spectrum.cols);
    let mut shifted = vec![0f64; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let m = spectrum.at(r, c).norm().ln_1p();
            shifted[((r + rows / 2) % rows) * cols + (c + cols / 2) % cols] = m;
        }
    }
    let mean = shifted.iter().sum::<f64>() / shifted.len() as f64;
    let mut bits: Vec<bool> = shifted.iter().map(|&m| m > mean).collect();
    bits[(rows / 2) * cols + cols / 2] = false;
    BinarySpectrum::new(rows, cols, bits).expect("fft dims are powers of two")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::fft::fft2d;
    use crate::tensor::Tensor;

    #[test]
    fn constant_image_gives_empty_mask() {
        let s = fft2d(&Tensor::full(&[8, 8], 0.7)).unwrap();
        let m = binarize_spectrum(&s);
        assert_eq!(m.count_ones(), 0);
        assert_eq!(m.dims(), (8, 8));
    }

    #[test]
    fn cosine_sets_two_carrier_bins() {
        // period 4 along columns -> energy at column frequencies +-2
        let img = Tensor::from_fn(&[8, 8], |i| {
            let c = i % 8;
            (2.0 * std::f64::consts::PI * c as f64 / 4.0).cos() as f32
        });
        let m = binarize_spectrum(&fft2d(&img).unwrap());
        let set: Vec<(usize, usize)> = (0..8)
            .flat_map(|r| (0..8).map(move |c| (r, c)))
            .filter(|&(r, c)| m.get(r, c))
            .collect();
        assert_eq!(set, vec![(4, 2), (4, 6)]);
    }

    #[test]
    fn pgm_header() {
        let m = BinarySpectrum::new(2, 4, vec![true, false, false, false, false, false, false, true]).unwrap();
        assert_eq!(m.to_pgm(), "P2\n4 2\n255\n255 0 0 0\n0 0 0 255\n");
    }
}
