//! Layer kernels: forward passes and their vector-Jacobian products.
//!
//! Reductions accumulate in f64; tensors store f32.

use crate::nn::layer::{conv_out, pool_out, Conv2d, Dense};
use crate::tensor::Tensor;

pub fn conv2d(input: &Tensor, conv: &Conv2d) -> Tensor {
    let [c_in, h, w] = dims3(input);
    debug_assert_eq!(c_in, conv.in_channels);
    let (kh, kw) = conv.kernel;
    let (sh, sw) = conv.stride;
    let (ph, pw) = conv.padding;
    let oh = conv_out(h, kh, sh, ph).expect("validated shape");
    let ow = conv_out(w, kw, sw, pw).expect("validated shape");
    let x = input.data();
    let mut out = Vec::with_capacity(conv.out_channels * oh * ow);
    let mut acc = vec![0f64; oh * ow];
    for f in 0..conv.out_channels {
        acc.fill(conv.bias[f] as f64);
        for c in 0..c_in {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for dy in 0..kh {
                for dx in 0..kw {
                    let wv = conv.weights[conv.weight_index(f, c, dy, dx)] as f64;
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let Some(iy) = shifted(oy * sh + dy, ph, h) else {
                            continue;
                        };
                        let row = &plane[iy * w..(iy + 1) * w];
                        let acc_row = &mut acc[oy * ow..(oy + 1) * ow];
                        for (ox, a) in acc_row.iter_mut().enumerate() {
                            if let Some(ix) = shifted(ox * sw + dx, pw, w) {
                                *a += wv * row[ix] as f64;
                            }
                        }
                    }
                }
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Tensor::new(vec![conv.out_channels, oh, ow], out).expect("consistent shape")
}

/// Returns the gradient w.r.t. the input and, when `grads` is given,
/// accumulates weight and bias gradients into it.
pub fn conv2d_backward(
    input: &Tensor,
    conv: &Conv2d,
    grad_out: &[f64],
    grads: Option<(&mut [f64], &mut [f64])>,
) -> Vec<f64> {
    let [c_in, h, w] = dims3(input);
    let (kh, kw) = conv.kernel;
    let (sh, sw) = conv.stride;
    let (ph, pw) = conv.padding;
    let oh = conv_out(h, kh, sh, ph).expect("validated shape");
    let ow = conv_out(w, kw, sw, pw).expect("validated shape");
    let x = input.data();
    let mut grad_in = vec![0f64; x.len()];
    let (mut gw, mut gb) = match grads {
        Some((gw, gb)) => (Some(gw), Some(gb)),
        None => (None, None),
    };
    for f in 0..conv.out_channels {
        let g = &grad_out[f * oh * ow..(f + 1) * oh * ow];
        if let Some(gb) = gb.as_deref_mut() {
            gb[f] += g.iter().sum::<f64>();
        }
        for c in 0..c_in {
            let base = c * h * w;
            for dy in 0..kh {
                for dx in 0..kw {
                    let wi = conv.weight_index(f, c, dy, dx);
                    let wv = conv.weights[wi] as f64;
                    let mut wacc = 0f64;
                    for oy in 0..oh {
                        let Some(iy) = shifted(oy * sh + dy, ph, h) else {
                            continue;
                        };
                        for ox in 0..ow {
                            let Some(ix) = shifted(ox * sw + dx, pw, w) else {
                                continue;
                            };
                            let go = g[oy * ow + ox];
                            let idx = base + iy * w + ix;
                            grad_in[idx] += wv * go;
                            wacc += x[idx] as f64 * go;
                        }
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        gw[wi] += wacc;
                    }
                }
            }
        }
    }
    grad_in
}

#[inline]
fn shifted(pos: usize, pad: usize, size: usize) -> Option<usize> {
    let i = pos.checked_sub(pad)?;
    (i < size).then_some(i)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Subgradient at exactly zero is zero.
pub fn relu_backward(input: &Tensor, grad_out: &[f64]) -> Vec<f64> {
    input
        .data()
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn maxpool2d(input: &Tensor, window: (usize, usize), stride: (usize, usize)) -> Tensor {
    let [c, h, w] = dims3(input);
    let oh = pool_out(h, window.0, stride.0);
    let ow = pool_out(w, window.1, stride.1);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let (y, x) = pool_argmax(input, ch, oy, ox, window, stride);
                out.push(input.at3(ch, y, x));
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).expect("consistent shape")
}

/// Position of the first maximum in the (possibly truncated) window.
fn pool_argmax(
    input: &Tensor,
    ch: usize,
    oy: usize,
    ox: usize,
    window: (usize, usize),
    stride: (usize, usize),
) -> (usize, usize) {
    let [_, h, w] = dims3(input);
    let y0 = oy * stride.0;
    let x0 = ox * stride.1;
    let mut best = (y0, x0);
    let mut best_v = f32::NEG_INFINITY;
    for y in y0..(y0 + window.0).min(h) {
        for x in x0..(x0 + window.1).min(w) {
            let v = input.at3(ch, y, x);
            if v > best_v {
                best_v = v;
                best = (y, x);
            }
        }
    }
    best
}

pub fn maxpool2d_backward(
    input: &Tensor,
    window: (usize, usize),
    stride: (usize, usize),
    grad_out: &[f64],
) -> Vec<f64> {
    let [c, h, w] = dims3(input);
    let oh = pool_out(h, window.0, stride.0);
    let ow = pool_out(w, window.1, stride.1);
    let mut grad_in = vec![0f64; input.len()];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let (y, x) = pool_argmax(input, ch, oy, ox, window, stride);
                grad_in[(ch * h + y) * w + x] += grad_out[(ch * oh + oy) * ow + ox];
            }
        }
    }
    grad_in
}

pub fn global_avg_pool(input: &Tensor) -> Tensor {
    let [c, h, w] = dims3(input);
    let n = (h * w) as f64;
    let out = input
        .data()
        .chunks(h * w)
        .map(|plane| (plane.iter().map(|&v| v as f64).sum::<f64>() / n) as f32)
        .collect();
    Tensor::new(vec![c], out).expect("consistent shape")
}

pub fn global_avg_pool_backward(input: &Tensor, grad_out: &[f64]) -> Vec<f64> {
    let [_, h, w] = dims3(input);
    let n = (h * w) as f64;
    grad_out
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / n, h * w))
        .collect()
}

pub fn dense(input: &Tensor, layer: &Dense) -> Tensor {
    let x = input.data();
    let out = (0..layer.outputs)
        .map(|o| {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            let s: f64 = row.iter().zip(x).map(|(&wv, &xv)| wv as f64 * xv as f64).sum();
            (s + layer.bias[o] as f64) as f32
        })
        .collect();
    Tensor::new(vec![layer.outputs], out).expect("consistent shape")
}

pub fn dense_backward(
    input: &Tensor,
    layer: &Dense,
    grad_out: &[f64],
    grads: Option<(&mut [f64], &mut [f64])>,
) -> Vec<f64> {
    let x = input.data();
    let mut grad_in = vec![0f64; layer.inputs];
    for (o, &g) in grad_out.iter().enumerate() {
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        for (gi, &wv) in grad_in.iter_mut().zip(row) {
            *gi += wv as f64 * g;
        }
    }
    if let Some((gw, gb)) = grads {
        for (o, &g) in grad_out.iter().enumerate() {
            gb[o] += g;
            let grow = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            for (gwv, &xv) in grow.iter_mut().zip(x) {
                *gwv += xv as f64 * g;
            }
        }
    }
    grad_in
}

pub fn softmax(input: &Tensor) -> Tensor {
    let probs = softmax_slice(input.data());
    Tensor::new(input.shape().to_vec(), probs).expect("consistent shape")
}

pub(crate) fn softmax_slice(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&v| ((v - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}

pub fn softmax_backward(output: &Tensor, grad_out: &[f64]) -> Vec<f64> {
    let p = output.data();
    let dot: f64 = p.iter().zip(grad_out).map(|(&pv, &g)| pv as f64 * g).sum();
    p.iter().zip(grad_out).map(|(&pv, &g)| pv as f64 * (g - dot)).collect()
}

fn dims3(t: &Tensor) -> [usize; 3] {
    let s = t.shape();
    [s[0], s[1], s[2]]
}
