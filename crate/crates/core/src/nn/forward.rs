use std::cell::Cell;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::layer::Layer;
use crate::nn::model::ModelGraph;
use crate::nn::ops;
use crate::tensor::Tensor;

/// Layer index to that layer's output for one forward pass.
pub type ActivationTaps = BTreeMap<usize, Tensor>;

/// Weight and bias gradients of one layer; `None` for layers without parameters.
pub(crate) type LayerGrads = Option<(Vec<f64>, Vec<f64>)>;

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probabilities: Tensor,
    pub logits: Tensor,
    pub predicted: usize,
    pub taps: ActivationTaps,
}

impl ForwardOutput {
    pub fn confidence(&self) -> f32 {
        self.probabilities.data()[self.predicted]
    }
}

/// Scalar quantity differentiated by [`ModelGraph::input_gradient`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Element `index` (flat, row-major) of layer `layer`'s output.
    Neuron { layer: usize, index: usize },
    /// Pre-softmax score of a class.
    ClassLogit(usize),
    /// Cross-entropy loss `-log p[target]`.
    CrossEntropy { target: usize },
}

/// Anything that can run the model. Lets callers observe how many passes a
/// pipeline performs.
pub trait Network {
    fn graph(&self) -> &ModelGraph;

    fn forward(&self, input: &Tensor, taps: &[usize]) -> Result<ForwardOutput>;

    /// Runs only the layers after `layer`, starting from a replacement for
    /// that layer's output.
    fn forward_after(&self, layer: usize, activation: &Tensor) -> Result<ForwardOutput>;
}

impl Network for ModelGraph {
    fn graph(&self) -> &ModelGraph {
        self
    }

    fn forward(&self, input: &Tensor, taps: &[usize]) -> Result<ForwardOutput> {
        ModelGraph::forward(self, input, taps)
    }

    fn forward_after(&self, layer: usize, activation: &Tensor) -> Result<ForwardOutput> {
        ModelGraph::forward_after(self, layer, activation)
    }
}

/// Wraps a model and counts full and partial passes.
///
/// The counters belong to the wrapper instance, so one wrapper per call gives
/// per-call counts.
#[derive(Debug)]
pub struct CountingNetwork<'a> {
    model: &'a ModelGraph,
    full: Cell<usize>,
    partial: Cell<usize>,
}

impl<'a> CountingNetwork<'a> {
    pub fn new(model: &'a ModelGraph) -> Self {
        Self {
            model,
            full: Cell::new(0),
            partial: Cell::new(0),
        }
    }

    pub fn full_passes(&self) -> usize {
        self.full.get()
    }

    pub fn partial_passes(&self) -> usize {
        self.partial.get()
    }
}

impl Network for CountingNetwork<'_> {
    fn graph(&self) -> &ModelGraph {
        self.model
    }

    fn forward(&self, input: &Tensor, taps: &[usize]) -> Result<ForwardOutput> {
        self.full.set(self.full.get() + 1);
        self.model.forward(input, taps)
    }

    fn forward_after(&self, layer: usize, activation: &Tensor) -> Result<ForwardOutput> {
        self.partial.set(self.partial.get() + 1);
        self.model.forward_after(layer, activation)
    }
}

impl ModelGraph {
    pub fn forward(&self, input: &Tensor, taps: &[usize]) -> Result<ForwardOutput> {
        self.check_input(input)?;
        if let Some(&bad) = taps.iter().find(|&&t| t >= self.layers().len()) {
            return Err(Error::InvalidObjective(format!(
                "tap layer {bad} out of range for {} layers",
                self.layers().len()
            )));
        }
        self.run(0, input.clone(), taps)
    }

    pub fn forward_after(&self, layer: usize, activation: &Tensor) -> Result<ForwardOutput> {
        if layer >= self.layers().len() {
            return Err(Error::InvalidObjective(format!("layer {layer} out of range")));
        }
        if activation.shape() != self.output_shape(layer) {
            return Err(Error::ShapeMismatch {
                expected: self.output_shape(layer).to_vec(),
                actual: activation.shape().to_vec(),
            });
        }
        self.run(layer + 1, activation.clone(), &[])
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape() {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape().to_vec(),
                actual: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn run(&self, start: usize, mut x: Tensor, taps: &[usize]) -> Result<ForwardOutput> {
        let logits_layer = self.logits_layer();
        let mut logits = None;
        let mut tapped = ActivationTaps::new();
        if start > logits_layer {
            logits = Some(x.clone());
        }
        for i in start..self.layers().len() {
            x = apply_layer(&self.layers()[i], &x);
            if taps.contains(&i) {
                tapped.insert(i, x.clone());
            }
            if i == logits_layer {
                logits = Some(x.clone());
            }
        }
        let logits = logits.expect("logits layer visited");
        let probabilities = if matches!(self.layers().last(), Some(Layer::Softmax)) {
            x
        } else {
            ops::softmax(&logits)
        };
        let probabilities = probabilities.reshape(&[self.num_classes()])?;
        let predicted = probabilities.argmax();
        Ok(ForwardOutput {
            probabilities,
            logits: logits.reshape(&[self.num_classes()])?,
            predicted,
            taps: tapped,
        })
    }

    /// All intermediate values: `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    fn trace(&self, input: &Tensor) -> Vec<Tensor> {
        let mut acts = Vec::with_capacity(self.layers().len() + 1);
        acts.push(input.clone());
        for layer in self.layers() {
            let next = apply_layer(layer, acts.last().expect("non-empty"));
            acts.push(next);
        }
        acts
    }

    /// Gradient of a scalar objective with respect to every input element.
    pub fn input_gradient(&self, input: &Tensor, objective: Objective) -> Result<Tensor> {
        self.check_input(input)?;
        let acts = self.trace(input);
        let (layer, seed) = self.objective_seed(&acts, objective)?;
        let grad = self.backward(&acts, layer, seed, None);
        Ok(to_tensor(input.shape(), &grad))
    }

    fn objective_seed(&self, acts: &[Tensor], objective: Objective) -> Result<(usize, Vec<f64>)> {
        let logits_layer = self.logits_layer();
        match objective {
            Objective::Neuron { layer, index } => {
                if layer >= self.layers().len() {
                    return Err(Error::InvalidObjective(format!("layer {layer} out of range")));
                }
                let n = acts[layer + 1].len();
                if index >= n {
                    return Err(Error::InvalidObjective(format!(
                        "neuron {index} out of range for layer {layer} with {n} outputs"
                    )));
                }
                let mut seed = vec![0.0; n];
                seed[index] = 1.0;
                Ok((layer, seed))
            }
            Objective::ClassLogit(c) => {
                self.check_class(c)?;
                let mut seed = vec![0.0; self.num_classes()];
                seed[c] = 1.0;
                Ok((logits_layer, seed))
            }
            Objective::CrossEntropy { target } => {
                self.check_class(target)?;
                let probs = ops::softmax_slice(acts[logits_layer + 1].data());
                let seed = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| p as f64 - if i == target { 1.0 } else { 0.0 })
                    .collect();
                Ok((logits_layer, seed))
            }
        }
    }

    fn check_class(&self, c: usize) -> Result<()> {
        if c >= self.num_classes() {
            return Err(Error::InvalidObjective(format!(
                "class {c} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }

    fn backward(
        &self,
        acts: &[Tensor],
        from_layer: usize,
        seed: Vec<f64>,
        mut param_grads: Option<&mut [LayerGrads]>,
    ) -> Vec<f64> {
        let mut grad = seed;
        for i in (0..=from_layer).rev() {
            let input = &acts[i];
            let slot = param_grads
                .as_deref_mut()
                .and_then(|pg| pg[i].as_mut())
                .map(|(w, b)| (w.as_mut_slice(), b.as_mut_slice()));
            grad = match &self.layers()[i] {
                Layer::Conv2d(c) => ops::conv2d_backward(input, c, &grad, slot),
                Layer::Relu => ops::relu_backward(input, &grad),
                Layer::MaxPool2d { window, stride } => ops::maxpool2d_backward(input, *window, *stride, &grad),
                Layer::GlobalAvgPool => ops::global_avg_pool_backward(input, &grad),
                Layer::Dense(d) => ops::dense_backward(input, d, &grad, slot),
                Layer::Softmax => ops::softmax_backward(&acts[i + 1], &grad),
            };
        }
        grad
    }

    /// Cross-entropy loss and its gradients for every parameterized layer
    /// (`None` for layers without parameters).
    pub(crate) fn loss_gradients(
        &self,
        input: &Tensor,
        target: usize,
    ) -> Result<(f64, Vec<LayerGrads>)> {
        self.check_input(input)?;
        let acts = self.trace(input);
        let (layer, seed) = self.objective_seed(&acts, Objective::CrossEntropy { target })?;
        let probs = ops::softmax_slice(acts[self.logits_layer() + 1].data());
        let loss = -(probs[target].max(1e-12) as f64).ln();
        let mut grads: Vec<_> = self
            .layers()
            .iter()
            .map(|l| l.params().map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()])))
            .collect();
        self.backward(&acts, layer, seed, Some(&mut grads));
        Ok((loss, grads))
    }
}

fn apply_layer(layer: &Layer, x: &Tensor) -> Tensor {
    match layer {
        Layer::Conv2d(c) => ops::conv2d(x, c),
        Layer::Relu => ops::relu(x),
        Layer::MaxPool2d { window, stride } => ops::maxpool2d(x, *window, *stride),
        Layer::GlobalAvgPool => ops::global_avg_pool(x),
        Layer::Dense(d) => ops::dense(x, d),
        Layer::Softmax => ops::softmax(x),
    }
}

fn to_tensor(shape: &[usize], values: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), values.iter().map(|&v| v as f32).collect()).expect("gradient matches input shape")
}

/// Applies a single convolution layer, validating shapes first.
pub fn conv2d_forward(input: &Tensor, layer: &Layer) -> Result<Tensor> {
    let Layer::Conv2d(conv) = layer else {
        return Err(Error::InvalidLayer {
            index: 0,
            reason: format!("expected conv2d, got {}", layer.desc().name()),
        });
    };
    layer
        .desc()
        .output_shape(input.shape())
        .map_err(|reason| Error::InvalidLayer { index: 0, reason })?;
    Ok(ops::conv2d(input, conv))
}
