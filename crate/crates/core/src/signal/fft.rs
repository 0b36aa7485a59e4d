//! Iterative radix-2 FFT and a row-column 2-D transform.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major complex grid produced by [`fft2d`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }
}

/// In-place unnormalized DFT (forward) or its unnormalized inverse.
///
/// `buf.len()` must be a power of two.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    if n == 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let angle = sign * 2.0 * std::f64::consts::PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, angle * k as f64))
            .collect();
        for chunk in buf.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
            }
        }
        len <<= 1;
    }
}

/// Forward 2-D DFT of a rank-2 tensor, zero-padded to power-of-two dims.
pub fn fft2d(image: &Tensor) -> Result<Spectrum> {
    let &[h, w] = image.shape() else {
        return Err(Error::InvalidTensor(format!(
            "fft2d expects a 2-D input, got shape {:?}",
            image.shape()
        )));
    };
    let (rows, cols) = (h.next_power_of_two(), w.next_power_of_two());
    let mut data = vec![Complex64::new(0.0, 0.0); rows * cols];
    for y in 0..h {
        for x in 0..w {
            data[y * cols + x] = Complex64::new(image.data()[y * w + x] as f64, 0.0);
        }
    }
    let mut spec = Spectrum { rows, cols, data };
    transform2d(&mut spec, false);
    Ok(spec)
}

/// Inverse of [`fft2d`] including the 1/N normalization.
pub fn ifft2d(spectrum: &Spectrum) -> Spectrum {
    let mut out = spectrum.clone();
    transform2d(&mut out, true);
    let n = (out.rows * out.cols) as f64;
    for v in &mut out.data {
        *v /= n;
    }
    out
}

fn transform2d(spec: &mut Spectrum, inverse: bool) {
    let (rows, cols) = (spec.rows, spec.cols);
    for row in spec.data.chunks_exact_mut(cols) {
        fft_in_place(row, inverse);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for (r, v) in column.iter_mut().enumerate() {
            *v = spec.data[r * cols + c];
        }
        fft_in_place(&mut column, inverse);
        for (r, v) in column.iter().enumerate() {
            spec.data[r * cols + c] = *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_only_dc() {
        let img = Tensor::full(&[8, 8], 0.25);
        let s = fft2d(&img).unwrap();
        assert!((s.at(0, 0).re - 16.0).abs() < 1e-9);
        for (i, v) in s.data.iter().enumerate().skip(1) {
            assert!(v.norm() < 1e-9, "bin {i} = {v}");
        }
    }

    #[test]
    fn pads_to_power_of_two() {
        let img = Tensor::full(&[5, 3], 1.0);
        let s = fft2d(&img).unwrap();
        assert_eq!((s.rows, s.cols), (8, 4));
        assert!((s.at(0, 0).re - 15.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_2d() {
        assert!(fft2d(&Tensor::zeros(&[4])).is_err());
        assert!(fft2d(&Tensor::zeros(&[1, 4, 4])).is_err());
    }
}
