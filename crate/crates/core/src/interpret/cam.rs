use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel-summed activation map over the last convolution's spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap(Tensor);

impl Heatmap {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.0.shape()[0], self.0.shape()[1])
    }

    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.0.data()[r * self.dims().1 + c]
    }
}

/// Sum of all channels at every spatial location of a `[K, H, W]` tap.
pub fn cam(last_conv: &Tensor) -> Result<Heatmap> {
    let &[k, h, w] = last_conv.shape() else {
        return Err(Error::InvalidTensor(format!(
            "CAM expects a [K, H, W] activation tensor, got {:?}",
            last_conv.shape()
        )));
    };
    let mut acc = vec![0f64; h * w];
    for plane in last_conv.data().chunks_exact(h * w).take(k) {
        for (a, &v) in acc.iter_mut().zip(plane) {
            *a += v as f64;
        }
    }
    let data = acc.into_iter().map(|v| v as f32).collect();
    Ok(Heatmap(Tensor::new(vec![h, w], data)?))
}

/// Axis-aligned pixel box, half-open: rows `top..bottom`, columns `left..right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Region {
    pub fn height(&self) -> usize {
        self.bottom - self.top
    }

    pub fn width(&self) -> usize {
        self.right - self.left
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.top..self.bottom).contains(&r) && (self.left..self.right).contains(&c)
    }
}

/// Box around the strongest activation source, in input pixel coordinates.
///
/// Cells at or above `alpha * max` that are 8-connected to the first (row-major)
/// maximum form the source; its bounding box is scaled by the layer's total
/// stride and clipped to the image.
pub fn localize_primary_region(
    heatmap: &Heatmap,
    image_hw: (usize, usize),
    stride: (usize, usize),
    alpha: f64,
) -> Result<Region> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let (h, w) = heatmap.dims();
    let values = heatmap.tensor().data();
    let peak = crate::tensor::argmax(values);
    let max = values[peak] as f64;
    if !(max > 0.0) {
        return Err(Error::NoPrimarySource);
    }
    let threshold = alpha * max;
    let mut seen = vec![false; h * w];
    let mut stack = vec![peak];
    seen[peak] = true;
    let (mut r0, mut c0, mut r1, mut c1) = (peak / w, peak % w, peak / w, peak % w);
    while let Some(i) = stack.pop() {
        let (r, c) = (i / w, i % w);
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
        for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
            for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                let j = nr * w + nc;
                if !seen[j] && values[j] as f64 >= threshold {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let (ih, iw) = image_hw;
    let region = Region {
        top: (r0 * stride.0).min(ih),
        left: (c0 * stride.1).min(iw),
        bottom: ((r1 + 1) * stride.0).min(ih),
        right: ((c1 + 1) * stride.1).min(iw),
    };
    if region.area() == 0 {
        return Err(Error::NoPrimarySource);
    }
    Ok(region)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(h: usize, w: usize, cells: &[(usize, usize, f32)]) -> Heatmap {
        let mut t = Tensor::zeros(&[1, h, w]);
        for &(r, c, v) in cells {
            t.set3(0, r, c, v);
        }
        cam(&t).unwrap()
    }

    #[test]
    fn sums_channels() {
        let t = Tensor::new(vec![2, 2, 2], vec![1., 2., 3., 4., 10., 20., 30., 40.]).unwrap();
        assert_eq!(cam(&t).unwrap().tensor().data(), &[11., 22., 33., 44.]);
        assert!(cam(&Tensor::zeros(&[4, 4])).is_err());
    }

    #[test]
    fn single_cell_scaled_by_stride() {
        let r = localize_primary_region(&heat(8, 8, &[(2, 3, 5.0)]), (32, 32), (4, 4), 0.7).unwrap();
        assert_eq!(
            r,
            Region {
                top: 8,
                left: 12,
                bottom: 12,
                right: 16
            }
        );
    }

    #[test]
    fn uniform_heatmap_covers_image() {
        let t = Tensor::full(&[3, 4, 4], 1.0);
        let r = localize_primary_region(&cam(&t).unwrap(), (16, 16), (4, 4), 0.7).unwrap();
        assert_eq!((r.top, r.left, r.bottom, r.right), (0, 0, 16, 16));
    }

    #[test]
    fn tie_picks_lowest_argmax_component() {
        let h = heat(6, 6, &[(4, 4, 2.0), (1, 1, 2.0)]);
        let r = localize_primary_region(&h, (6, 6), (1, 1), 0.5).unwrap();
        assert!(r.contains(1, 1) && !r.contains(4, 4));
    }

    #[test]
    fn zero_heatmap_has_no_source() {
        assert!(matches!(
            localize_primary_region(&heat(4, 4, &[]), (4, 4), (1, 1), 0.7),
            Err(Error::NoPrimarySource)
        ));
        assert!(localize_primary_region(&heat(4, 4, &[(0, 0, 1.0)]), (4, 4), (1, 1), 1.0).is_err());
    }

    #[test]
    fn clipped_to_image() {
        let r = localize_primary_region(&heat(4, 4, &[(3, 3, 1.0)]), (14, 15), (4, 4), 0.7).unwrap();
        assert_eq!((r.bottom, r.right), (14, 15));
    }
}
