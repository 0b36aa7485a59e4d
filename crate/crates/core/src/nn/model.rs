use crate::error::{Error, Result};
use crate::nn::layer::{Layer, LayerDesc};

/// Layer table without weights. Used for cost modelling of networks too large
/// to materialize.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerDesc>,
    pub last_conv: Option<usize>,
}

impl Architecture {
    /// Output shape of every layer, checking that consecutive layers compose.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut current = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.output_shape(&current).map_err(|reason| {
                if i == 0 {
                    Error::InvalidLayer { index: 0, reason }
                } else {
                    Error::ShapeComposition {
                        first: i - 1,
                        second: i,
                        reason,
                    }
                }
            })?;
            shapes.push(out.clone());
            current = out;
        }
        Ok(shapes)
    }

    /// Product of the strides of every spatial layer up to and including `layer`.
    pub fn total_stride(&self, layer: usize) -> (usize, usize) {
        self.layers[..=layer].iter().fold((1, 1), |(sy, sx), l| match *l {
            LayerDesc::Conv2d { stride, .. } | LayerDesc::MaxPool2d { stride, .. } => (sy * stride.0, sx * stride.1),
            _ => (sy, sx),
        })
    }
}

/// A validated, immutable classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    input_shape: Vec<usize>,
    labels: Vec<String>,
    last_conv: Option<usize>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
}

impl ModelGraph {
    /// Validates and assembles a model.
    ///
    /// A trailing softmax is optional; when absent the forward pass applies one
    /// to the final output. `last_conv` must be given whenever the network has a
    /// convolution.
    pub fn new(
        input_shape: Vec<usize>,
        labels: Vec<String>,
        layers: Vec<Layer>,
        last_conv: Option<usize>,
    ) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::MalformedModel(format!(
                "input shape {input_shape:?} must have positive dims"
            )));
        }
        if layers.is_empty() || matches!(layers.as_slice(), [Layer::Softmax]) {
            return Err(Error::MalformedModel(
                "model needs at least one layer before softmax".into(),
            ));
        }
        for (i, layer) in layers.iter().enumerate() {
            let desc = layer.desc();
            if let Some((w, b)) = layer.params() {
                if w.len() != desc.weight_len() || b.len() != desc.bias_len() {
                    return Err(Error::InvalidLayer {
                        index: i,
                        reason: format!(
                            "{} weights/bias have {}/{} values, expected {}/{}",
                            desc.name(),
                            w.len(),
                            b.len(),
                            desc.weight_len(),
                            desc.bias_len()
                        ),
                    });
                }
            }
            if matches!(layer, Layer::Softmax) && i + 1 != layers.len() {
                return Err(Error::InvalidLayer {
                    index: i,
                    reason: "softmax is only allowed as the final layer".into(),
                });
            }
        }
        let arch = Architecture {
            input_shape: input_shape.clone(),
            layers: layers.iter().map(Layer::desc).collect(),
            last_conv,
        };
        let shapes = arch.layer_shapes()?;
        let has_conv = arch.layers.iter().any(LayerDesc::is_conv);
        match last_conv {
            Some(i) if i >= layers.len() => {
                return Err(Error::MissingLastConv(format!(
                    "index {i} out of range for {} layers",
                    layers.len()
                )))
            }
            Some(i) if !arch.layers[i].is_conv() => {
                return Err(Error::MissingLastConv(format!(
                    "layer {i} is {}, not conv2d",
                    arch.layers[i].name()
                )))
            }
            None if has_conv => {
                return Err(Error::MissingLastConv(
                    "network has convolutions but no designation".into(),
                ))
            }
            _ => {}
        }
        let classes: usize = shapes.last().expect("non-empty").iter().product();
        if classes != labels.len() {
            return Err(Error::MalformedModel(format!(
                "{} class labels for {classes} outputs",
                labels.len()
            )));
        }
        Ok(Self {
            input_shape,
            labels,
            last_conv,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn last_conv(&self) -> Option<usize> {
        self.last_conv
    }

    pub fn require_last_conv(&self) -> Result<usize> {
        self.last_conv
            .ok_or_else(|| Error::MissingLastConv("model has no convolutional layer".into()))
    }

    /// Layer whose output holds the last convolution's activations: the ReLU
    /// directly after the designated convolution when there is one, otherwise
    /// the convolution itself.
    pub fn last_conv_activation(&self) -> Result<usize> {
        let i = self.require_last_conv()?;
        Ok(match self.layers.get(i + 1) {
            Some(Layer::Relu) => i + 1,
            _ => i,
        })
    }

    /// Output shape of layer `i`.
    pub fn output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(Layer::desc).collect(),
            last_conv: self.last_conv,
        }
    }

    /// Index of the layer whose output is the logit vector.
    pub(crate) fn logits_layer(&self) -> usize {
        let n = self.layers.len();
        if matches!(self.layers[n - 1], Layer::Softmax) {
            n - 2
        } else {
            n - 1
        }
    }

    /// Mutable access for training. Shapes are fixed, only values change.
    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (usize, &mut [f32], &mut [f32])> {
        self.layers
            .iter_mut()
            .enumerate()
            .filter_map(|(i, l)| l.params_mut().map(|(w, b)| (i, w, b)))
    }

    pub(crate) fn layer_mut(&mut self, i: usize) -> &mut Layer {
        &mut self.layers[i]
    }
}
