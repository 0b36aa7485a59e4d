//! Activation maximization: gradient ascent on the input toward one neuron.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{ModelGraph, Objective};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmConfig {
    pub steps: usize,
    /// Ascent step size. Zero leaves the initialization untouched.
    pub eta: f64,
    /// Strength of the L2 + total-variation penalty; `None` runs plain ascent.
    pub regularization: Option<f64>,
    /// Seed for the initialization noise.
    pub seed: u64,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            eta: 0.1,
            regularization: None,
            seed: 0,
        }
    }
}

impl AmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("AM needs at least one step".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("AM step size {} must be >= 0", self.eta)));
        }
        if let Some(l) = self.regularization {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig(format!("AM regularization {l} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AmOutcome {
    pub pattern: Tensor,
    pub final_activation: f32,
    /// Neuron activation after each step.
    pub trace: Vec<f32>,
}

/// Mid-gray plus uniform noise in `[-0.01, 0.01]`, clamped to `[0, 1]`.
pub fn am_initialization(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| (0.5 + rng.gen_range(-0.01f32..=0.01)).clamp(0.0, 1.0))
}

/// Maximizes the output `index` of layer `layer` by projected gradient ascent
/// over `[0, 1]` inputs.
pub fn activation_maximization(model: &ModelGraph, layer: usize, index: usize, cfg: &AmConfig) -> Result<AmOutcome> {
    cfg.validate()?;
    let objective = Objective::Neuron { layer, index };
    let mut x = am_initialization(model.input_shape(), cfg.seed);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let grad = model.input_gradient(&x, objective)?;
        let penalty = cfg
            .regularization
            .filter(|&l| l > 0.0)
            .map(|l| (l, penalty_gradient(&x)));
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            let mut g = grad.data()[i] as f64;
            if let Some((l, pg)) = &penalty {
                g -= l * pg[i];
            }
            *v = (*v as f64 + cfg.eta * g).clamp(0.0, 1.0) as f32;
        }
        let a = neuron_value(model, &x, layer, index)?;
        if !a.is_finite() || !x.is_finite() {
            return Err(Error::NonFinite { step });
        }
        trace.push(a);
    }
    Ok(AmOutcome {
        final_activation: *trace.last().expect("steps >= 1"),
        pattern: x,
        trace,
    })
}

pub(crate) fn neuron_value(model: &ModelGraph, x: &Tensor, layer: usize, index: usize) -> Result<f32> {
    let out = model.forward(x, &[layer])?;
    out.taps[&layer]
        .data()
        .get(index)
        .copied()
        .ok_or_else(|| Error::InvalidObjective(format!("neuron {index} out of range")))
}

/// Gradient of `||X||² + TV(X)`, with anisotropic L1 total variation over the
/// two trailing axes (sign subgradient, zero at ties).
fn penalty_gradient(x: &Tensor) -> Vec<f64> {
    let shape = x.shape();
    let w = shape[shape.len() - 1];
    let h = if shape.len() >= 2 { shape[shape.len() - 2] } else { 1 };
    let d = x.data();
    let mut g: Vec<f64> = d.iter().map(|&v| 2.0 * v as f64).collect();
    let sign = |v: f32| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for base in (0..d.len()).step_by(h * w) {
        for r in 0..h {
            for c in 0..w {
                let i = base + r * w + c;
                if c + 1 < w {
                    let s = sign(d[i + 1] - d[i]);
                    g[i + 1] += s;
                    g[i] -= s;
                }
                if r + 1 < h {
                    let s = sign(d[i + w] - d[i]);
                    g[i + w] += s;
                    g[i] -= s;
                }
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer};

    fn linear_model() -> ModelGraph {
        let mut d = Dense::zeros(4, 2);
        d.weights = vec![0.5, -0.25, 1.0, 0.1, -0.3, 0.2, 0.0, 0.4];
        ModelGraph::new(vec![4], vec!["a".into(), "b".into()], vec![Layer::Dense(d)], None).unwrap()
    }

    #[test]
    fn ascent_on_linear_objective_increases_every_step() {
        let cfg = AmConfig {
            steps: 5,
            eta: 0.01,
            ..AmConfig::default()
        };
        let out = activation_maximization(&linear_model(), 0, 0, &cfg).unwrap();
        let start = neuron_value(&linear_model(), &am_initialization(&[4], 0), 0, 0).unwrap();
        let mut prev = start;
        for &a in &out.trace {
            assert!(a > prev, "{a} <= {prev}");
            prev = a;
        }
    }

    #[test]
    fn zero_step_size_keeps_initialization() {
        let cfg = AmConfig {
            steps: 3,
            eta: 0.0,
            seed: 9,
            ..AmConfig::default()
        };
        let out = activation_maximization(&linear_model(), 0, 1, &cfg).unwrap();
        assert_eq!(out.pattern, am_initialization(&[4], 9));
    }

    #[test]
    fn init_is_mid_gray_with_small_noise() {
        let t = am_initialization(&[3, 8, 8], 1);
        assert!(t.data().iter().all(|&v| (v - 0.5).abs() <= 0.01 + 1e-7));
    }

    #[test]
    fn invalid_neuron_rejected() {
        let cfg = AmConfig::default();
        assert!(activation_maximization(&linear_model(), 0, 7, &cfg).is_err());
        assert!(activation_maximization(&linear_model(), 3, 0, &cfg).is_err());
    }

    #[test]
    fn tv_gradient_matches_finite_difference() {
        let x = Tensor::new(vec![1, 2, 3], vec![0.1, 0.5, 0.2, 0.9, 0.3, 0.7]).unwrap();
        let value = |t: &Tensor| {
            let d = t.data();
            let mut s: f64 = d.iter().map(|&v| (v as f64).powi(2)).sum();
            for r in 0..2 {
                for c in 0..3 {
                    if c + 1 < 3 {
                        s += (d[r * 3 + c + 1] - d[r * 3 + c]).abs() as f64;
                    }
                    if r == 0 {
                        s += (d[3 + c] - d[c]).abs() as f64;
                    }
                }
            }
            s
        };
        let g = penalty_gradient(&x);
        for (i, &gi) in g.iter().enumerate().take(6) {
            let mut p = x.clone();
            let mut m = x.clone();
            p.data_mut()[i] += 1e-3;
            m.data_mut()[i] -= 1e-3;
            let fd = (value(&p) - value(&m)) / 2e-3;
            assert!((fd - gi).abs() < 1e-3, "coord {i}: {fd} vs {gi}");
        }
    }
}
