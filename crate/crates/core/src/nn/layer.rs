use serde::{Deserialize, Serialize};

/// Weight-free description of a layer: enough to infer shapes and count cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerDesc {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    },
    Relu,
    MaxPool2d {
        window: (usize, usize),
        stride: (usize, usize),
    },
    GlobalAvgPool,
    /// Flattens its input.
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Softmax,
}

impl LayerDesc {
    pub fn name(&self) -> &'static str {
        match self {
            LayerDesc::Conv2d { .. } => "conv2d",
            LayerDesc::Relu => "relu",
            LayerDesc::MaxPool2d { .. } => "maxpool2d",
            LayerDesc::GlobalAvgPool => "global-avg-pool",
            LayerDesc::Dense { .. } => "dense",
            LayerDesc::Softmax => "softmax",
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerDesc::Conv2d { .. })
    }

    /// Checks hyperparameters that do not depend on the input shape.
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            LayerDesc::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 {
                    return Err("channel counts must be positive".into());
                }
                if kernel.0 == 0 || kernel.1 == 0 {
                    return Err("kernel dims must be positive".into());
                }
                if stride.0 == 0 || stride.1 == 0 {
                    return Err("stride must be >= 1".into());
                }
            }
            LayerDesc::MaxPool2d { window, stride } => {
                if window.0 == 0 || window.1 == 0 {
                    return Err("pool window must be positive".into());
                }
                if stride.0 == 0 || stride.1 == 0 {
                    return Err("stride must be >= 1".into());
                }
            }
            LayerDesc::Dense { inputs, outputs }
                if (inputs == 0 || outputs == 0) => {
                    return Err("dense dims must be positive".into());
                }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        self.validate()?;
        match *self {
            LayerDesc::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = rank3(input)?;
                if c != in_channels {
                    return Err(format!("conv expects {in_channels} input channels, got {c}"));
                }
                let oh = conv_out(h, kernel.0, stride.0, padding.0)
                    .ok_or_else(|| format!("conv output height non-positive for input {input:?}"))?;
                let ow = conv_out(w, kernel.1, stride.1, padding.1)
                    .ok_or_else(|| format!("conv output width non-positive for input {input:?}"))?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerDesc::Relu | LayerDesc::Softmax => Ok(input.to_vec()),
            LayerDesc::MaxPool2d { window, stride } => {
                let [c, h, w] = rank3(input)?;
                Ok(vec![
                    c,
                    pool_out(h, window.0, stride.0),
                    pool_out(w, window.1, stride.1),
                ])
            }
            LayerDesc::GlobalAvgPool => {
                let [c, _, _] = rank3(input)?;
                Ok(vec![c])
            }
            LayerDesc::Dense { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(format!("dense expects {inputs} inputs, got {n}"));
                }
                Ok(vec![outputs])
            }
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerDesc::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel.0 * kernel.1,
            LayerDesc::Dense { inputs, outputs } => inputs * outputs,
            _ => 0,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerDesc::Conv2d { out_channels, .. } => out_channels,
            LayerDesc::Dense { outputs, .. } => outputs,
            _ => 0,
        }
    }
}

fn rank3(shape: &[usize]) -> Result<[usize; 3], String> {
    match shape {
        &[c, h, w] => Ok([c, h, w]),
        _ => Err(format!("expected a [C, H, W] input, got {shape:?}")),
    }
}

pub(crate) fn conv_out(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Windows that run past the edge are kept and pool over the available elements.
pub(crate) fn pool_out(size: usize, window: usize, stride: usize) -> usize {
    size.saturating_sub(window).div_ceil(stride) + 1
}

/// A layer together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    MaxPool2d {
        window: (usize, usize),
        stride: (usize, usize),
    },
    GlobalAvgPool,
    Dense(Dense),
    Softmax,
}

/// Weights are laid out `[out, in, kh, kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Weights are laid out `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    /// Square kernel, equal stride and padding on both axes, zero weights.
    pub fn square(in_channels: usize, out_channels: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (k, k),
            stride: (stride, stride),
            padding: (pad, pad),
            weights: vec![0.0; out_channels * in_channels * k * k],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn weight_index(&self, f: usize, c: usize, dy: usize, dx: usize) -> usize {
        ((f * self.in_channels + c) * self.kernel.0 + dy) * self.kernel.1 + dx
    }
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

impl Layer {
    pub fn desc(&self) -> LayerDesc {
        match self {
            Layer::Conv2d(c) => LayerDesc::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
            },
            Layer::Relu => LayerDesc::Relu,
            Layer::MaxPool2d { window, stride } => LayerDesc::MaxPool2d {
                window: *window,
                stride: *stride,
            },
            Layer::GlobalAvgPool => LayerDesc::GlobalAvgPool,
            Layer::Dense(d) => LayerDesc::Dense {
                inputs: d.inputs,
                outputs: d.outputs,
            },
            Layer::Softmax => LayerDesc::Softmax,
        }
    }

    pub fn params(&self) -> Option<(&[f32], &[f32])> {
        match self {
            Layer::Conv2d(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut [f32], &mut [f32])> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_keeps_incomplete_windows() {
        assert_eq!(pool_out(5, 2, 2), 3);
        assert_eq!(pool_out(4, 2, 2), 2);
        assert_eq!(pool_out(1, 2, 2), 1);
        assert_eq!(pool_out(47, 3, 3), 16);
    }

    #[test]
    fn conv_shape_inference() {
        let d = LayerDesc::Conv2d {
            in_channels: 3,
            out_channels: 8,
            kernel: (3, 3),
            stride: (1, 1),
            padding: (1, 1),
        };
        assert_eq!(d.output_shape(&[3, 32, 32]).unwrap(), vec![8, 32, 32]);
        assert!(d.output_shape(&[4, 32, 32]).is_err());
        let big = LayerDesc::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: (5, 5),
            stride: (1, 1),
            padding: (0, 0),
        };
        assert!(big.output_shape(&[1, 3, 3]).is_err());
    }

    #[test]
    fn zero_stride_rejected() {
        let d = LayerDesc::MaxPool2d {
            window: (2, 2),
            stride: (0, 1),
        };
        assert!(d.validate().is_err());
    }
}
