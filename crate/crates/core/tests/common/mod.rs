//! Independent reference implementations and checks shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vigil::nn::{conv2d_forward, Conv2d, Dense, Layer};
use vigil::signal::{fft2d, jaccard_inconsistency, pearson_inconsistency, BinarySpectrum};
use vigil::{ModelGraph, Objective, Tensor};

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0f32..1.0))
}

pub fn random_conv(rng: &mut impl Rng) -> Conv2d {
    let cin = rng.gen_range(1..=4);
    let cout = rng.gen_range(1..=4);
    let kernel = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let stride = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    let padding = (rng.gen_range(0..=kernel.0 - 1), rng.gen_range(0..=kernel.1 - 1));
    let scale = 1.0 / ((cin * kernel.0 * kernel.1) as f32).sqrt();
    Conv2d {
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        padding,
        weights: (0..cout * cin * kernel.0 * kernel.1)
            .map(|_| rng.gen_range(-scale..scale))
            .collect(),
        bias: (0..cout).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    }
}

/// Direct nested-loop convolution with zero padding, f64 throughout.
pub fn naive_conv(input: &Tensor, conv: &Conv2d) -> Vec<f64> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (kh, kw) = conv.kernel;
    let (sh, sw) = conv.stride;
    let (ph, pw) = conv.padding;
    let oh = (h + 2 * ph - kh) / sh + 1;
    let ow = (w + 2 * pw - kw) / sw + 1;
    let mut out = vec![0f64; conv.out_channels * oh * ow];
    for f in 0..conv.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = conv.bias[f] as f64;
                for ch in 0..c {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let y = (oy * sh + dy) as isize - ph as isize;
                            let x = (ox * sw + dx) as isize - pw as isize;
                            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                continue;
                            }
                            let wi = ((f * c + ch) * kh + dy) * kw + dx;
                            acc += conv.weights[wi] as f64 * input.at3(ch, y as usize, x as usize) as f64;
                        }
                    }
                }
                out[(f * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Largest absolute deviation of `conv2d_forward` from the naive loop over
/// `cases` random layers and inputs.
pub fn conv_oracle_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f64;
    for _ in 0..cases {
        let conv = random_conv(&mut rng);
        let h = rng.gen_range(conv.kernel.0..=9);
        let w = rng.gen_range(conv.kernel.1..=9);
        let input = random_tensor(&[conv.in_channels, h, w], &mut rng);
        let expected = naive_conv(&input, &conv);
        let got = conv2d_forward(&input, &Layer::Conv2d(conv)).expect("valid conv");
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.data().iter().zip(&expected) {
            worst = worst.max((*g as f64 - e).abs());
        }
    }
    worst
}

/// O(N²) 2-D DFT of a real grid already padded to `rows × cols`.
pub fn naive_dft2(grid: &[f64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for u in 0..rows {
        for v in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..rows {
                for x in 0..cols {
                    let angle =
                        -2.0 * std::f64::consts::PI * ((u * y) as f64 / rows as f64 + (v * x) as f64 / cols as f64);
                    acc += grid[y * cols + x] * Complex64::from_polar(1.0, angle);
                }
            }
            out[u * cols + v] = acc;
        }
    }
    out
}

pub struct FftCheck {
    /// max |fft − dft| / max |dft| over all cases.
    pub relative_error: f64,
    /// max |Σ|x|² − Σ|X|²/N| / Σ|x|² over all cases.
    pub parseval_error: f64,
}

/// Compares `fft2d` with the naive DFT on random images, including sizes that
/// need zero padding, up to 32×32.
pub fn fft_oracle(seed: u64) -> FftCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![
        (1, 1),
        (2, 2),
        (4, 8),
        (8, 4),
        (16, 16),
        (32, 32),
        (3, 5),
        (7, 12),
        (32, 17),
    ];
    for _ in 0..6 {
        sizes.push((rng.gen_range(1..=32), rng.gen_range(1..=32)));
    }
    let (mut rel, mut pars) = (0f64, 0f64);
    for (h, w) in sizes {
        let img = random_tensor(&[h, w], &mut rng);
        let spec = fft2d(&img).expect("2-D input");
        let (rows, cols) = (h.next_power_of_two(), w.next_power_of_two());
        assert_eq!((spec.rows, spec.cols), (rows, cols));
        let mut grid = vec![0f64; rows * cols];
        for y in 0..h {
            for x in 0..w {
                grid[y * cols + x] = img.data()[y * w + x] as f64;
            }
        }
        let dft = naive_dft2(&grid, rows, cols);
        let scale = dft.iter().map(|z| z.norm()).fold(0f64, f64::max).max(f64::MIN_POSITIVE);
        let diff = spec
            .data
            .iter()
            .zip(&dft)
            .map(|(a, b)| (a - b).norm())
            .fold(0f64, f64::max);
        rel = rel.max(diff / scale);
        let energy: f64 = grid.iter().map(|v| v * v).sum();
        let spectral: f64 = spec.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / (rows * cols) as f64;
        if energy > 0.0 {
            pars = pars.max((energy - spectral).abs() / energy);
        }
    }
    FftCheck {
        relative_error: rel,
        parseval_error: pars,
    }
}

fn he(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f32> {
    let s = (2.0 / fan_in as f32).sqrt();
    (0..n).map(|_| rng.gen_range(-s..s)).collect()
}

fn small_bias(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()
}

/// One small random model per layer kind, each paired with the index of the
/// layer whose output the gradient is taken of.
pub fn gradient_cases(seed: u64) -> Vec<(&'static str, ModelGraph, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = |rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize, s: usize, p: usize| {
        let mut c = Conv2d::square(cin, cout, k, s, p);
        c.weights = he(rng, cin * k * k, c.weights.len());
        c.bias = small_bias(rng, cout);
        Layer::Conv2d(c)
    };
    let dense = |rng: &mut ChaCha8Rng, i: usize, o: usize| {
        let mut d = Dense::zeros(i, o);
        d.weights = he(rng, i, i * o);
        d.bias = small_bias(rng, o);
        Layer::Dense(d)
    };
    let labels = |n: usize| (0..n).map(|i| format!("c{i}")).collect::<Vec<_>>();
    let mk = |input: Vec<usize>, layers: Vec<Layer>, last_conv: Option<usize>, n: usize| {
        ModelGraph::new(input, labels(n), layers, last_conv).expect("valid test model")
    };
    let conv_a = conv(&mut rng, 2, 3, 3, 1, 1);
    let conv_b = conv(&mut rng, 2, 3, 3, 2, 0);
    let relu_conv = conv(&mut rng, 2, 4, 3, 1, 1);
    let pool_conv = conv(&mut rng, 2, 3, 3, 1, 1);
    let gap_conv = conv(&mut rng, 2, 3, 3, 1, 1);
    let dense_a = dense(&mut rng, 2 * 5 * 5, 4);
    let soft_d = dense(&mut rng, 2 * 4 * 4, 3);
    vec![
        ("conv2d", mk(vec![2, 6, 6], vec![conv_a], Some(0), 3 * 6 * 6), 0),
        ("conv2d-strided", mk(vec![2, 7, 7], vec![conv_b], Some(0), 27), 0),
        ("relu", mk(vec![2, 5, 5], vec![relu_conv, Layer::Relu], Some(0), 100), 1),
        (
            "maxpool2d",
            mk(
                vec![2, 6, 6],
                vec![
                    pool_conv,
                    Layer::MaxPool2d {
                        window: (2, 2),
                        stride: (2, 2),
                    },
                ],
                Some(0),
                27,
            ),
            1,
        ),
        (
            "global-avg-pool",
            mk(vec![2, 5, 5], vec![gap_conv, Layer::GlobalAvgPool], Some(0), 3),
            1,
        ),
        ("dense", mk(vec![2, 5, 5], vec![dense_a], None, 4), 0),
        ("softmax", mk(vec![2, 4, 4], vec![soft_d, Layer::Softmax], None, 3), 1),
    ]
}

/// Worst relative error between `input_gradient` and central differences
/// over `coords` random input coordinates, for every layer kind.
///
/// Relative error is `|g − fd| / max(|g|, |fd|, 1e-2)`; the floor keeps
/// near-zero gradients from turning f32 rounding into a large ratio.
pub fn gradient_check(coords: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    gradient_cases(seed)
        .into_iter()
        .map(|(name, model, layer)| {
            let input = random_tensor(model.input_shape(), &mut rng);
            let out_len = model.output_shape(layer).iter().product::<usize>();
            let mut worst = 0f64;
            for _ in 0..coords {
                let index = rng.gen_range(0..out_len);
                let objective = Objective::Neuron { layer, index };
                let grad = model.input_gradient(&input, objective).expect("gradient");
                let i = rng.gen_range(0..input.len());
                let value = |x: &Tensor| model.forward(x, &[layer]).expect("forward").taps[&layer].data()[index] as f64;
                let h = 1e-3f32;
                let (mut plus, mut minus) = (input.clone(), input.clone());
                plus.data_mut()[i] += h;
                minus.data_mut()[i] -= h;
                let step = plus.data()[i] as f64 - minus.data()[i] as f64;
                let fd = (value(&plus) - value(&minus)) / step;
                let g = grad.data()[i] as f64;
                worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-2));
            }
            (name, worst)
        })
        .collect()
}

/// Textbook `1 − |A∩B|/|A∪B|` over index sets.
pub fn brute_jaccard(a: &[bool], b: &[bool]) -> f64 {
    let set = |m: &[bool]| {
        m.iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| i)
            .collect::<std::collections::BTreeSet<_>>()
    };
    let (sa, sb) = (set(a), set(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        0.0
    } else {
        1.0 - sa.intersection(&sb).count() as f64 / union as f64
    }
}

/// `1 − r` with r from the raw-sum formula.
pub fn brute_pearson(x: &[f32], y: &[f32]) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (a as f64, b as f64);
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let cov = sxy - sx * sy / n;
    let r = cov / ((sxx - sx * sx / n) * (syy - sy * sy / n)).sqrt();
    1.0 - r
}

pub struct MetricCheck {
    pub jaccard_error: f64,
    pub pearson_error: f64,
    pub jaccard_in_range: bool,
    pub pearson_in_range: bool,
    pub affine_error: f64,
}

/// `cases` random masks and vectors against the brute-force forms, plus the
/// range and positive-affine-invariance properties. Affine checks use dyadic
/// values and power-of-two scales so the transformed f32 vector is exact.
pub fn metric_check(cases: usize, seed: u64) -> MetricCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MetricCheck {
        jaccard_error: 0.0,
        pearson_error: 0.0,
        jaccard_in_range: true,
        pearson_in_range: true,
        affine_error: 0.0,
    };
    for _ in 0..cases {
        let side = 1usize << rng.gen_range(1..=3);
        let density = rng.gen_range(0.0..1.0);
        let bits = |rng: &mut ChaCha8Rng| (0..side * side).map(|_| rng.gen_bool(density)).collect::<Vec<_>>();
        let (a, b) = (bits(&mut rng), bits(&mut rng));
        let d = jaccard_inconsistency(
            &BinarySpectrum::new(side, side, a.clone()).unwrap(),
            &BinarySpectrum::new(side, side, b.clone()).unwrap(),
        )
        .unwrap();
        out.jaccard_error = out.jaccard_error.max((d - brute_jaccard(&a, &b)).abs());
        out.jaccard_in_range &= (0.0..=1.0).contains(&d);

        let n = rng.gen_range(2..=12);
        let dyadic = |rng: &mut ChaCha8Rng| {
            (0..n)
                .map(|_| rng.gen_range(-256i32..=256) as f32 / 64.0)
                .collect::<Vec<_>>()
        };
        let (x, y) = (dyadic(&mut rng), dyadic(&mut rng));
        let degenerate = |v: &[f32]| v.iter().all(|&e| e == v[0]);
        if degenerate(&x) || degenerate(&y) {
            continue;
        }
        let p = pearson_inconsistency(&x, &y).unwrap();
        out.pearson_error = out.pearson_error.max((p - brute_pearson(&x, &y)).abs());
        out.pearson_in_range &= (0.0..=2.0).contains(&p);
        let scale = [0.5f32, 2.0, 4.0, 8.0][rng.gen_range(0..4)];
        let shift = rng.gen_range(-8i32..=8) as f32;
        let moved: Vec<f32> = x.iter().map(|v| v * scale + shift).collect();
        let q = pearson_inconsistency(&moved, &y).unwrap();
        out.affine_error = out.affine_error.max((p - q).abs());
    }
    out
}
