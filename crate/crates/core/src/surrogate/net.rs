//! Fully connected ReLU network, backpropagation and the Nadam optimizer.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Affine layer; `weights` has shape `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// He-normal weights, zero bias.
    pub fn he<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        Self {
            weights: Array2::from_shape_simple_fn((outputs, inputs), || normal.sample(rng)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

/// Feature scaling applied around the network. Inputs are log10 gains,
/// outputs are log10 powers; both standardized per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    /// Standardized value used for absent entries.
    pub pad: f64,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
}

impl Normalization {
    pub fn identity(width: usize) -> Self {
        Self {
            input_mean: vec![0.0; width],
            input_std: vec![1.0; width],
            pad: 0.0,
            output_mean: vec![0.0; width],
            output_std: vec![1.0; width],
        }
    }
}

/// Hidden layers are ReLU, the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Pre-activations and activations of every layer for one batch.
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    pub activations: Vec<Array2<f64>>,
    pub pre: Vec<Array2<f64>>,
}

impl Network {
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Layer::he(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(Layer::inputs).collect();
        s.extend(self.layers.last().map(Layer::outputs));
        s
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Batch forward pass, one sample per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(a.view());
            if i < last {
                a.mapv_inplace(relu);
            }
        }
        a
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> ForwardCache {
        let mut activations = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(activations[i].view());
            let a = if i < last { z.mapv(relu) } else { z.clone() };
            pre.push(z);
            activations.push(a);
        }
        ForwardCache { activations, pre }
    }

    /// Mean squared error over all entries and its gradient.
    pub fn backprop(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Vec<Layer>) {
        let cache = self.forward_cached(x);
        let out = cache.activations.last().expect("at least the input");
        let loss = mse_loss(out.view(), target);
        let mut delta = (out - &target) * (2.0 / out.len() as f64);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                delta.zip_mut_with(&cache.pre[i], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let weights = delta.t().dot(&cache.activations[i]);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&self.layers[i].weights);
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        (loss, grads)
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Mean over all entries of the squared difference.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    assert_eq!(pred.shape(), target.shape(), "shape mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

/// Adam with Nesterov momentum.
#[derive(Debug, Clone)]
pub struct Nadam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Layer>,
    second: Vec<Layer>,
}

impl Nadam {
    pub fn new(net: &Network, beta1: f64) -> Self {
        let zeros = || net.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect();
        Self {
            beta1,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn update(&mut self, net: &mut Network, grads: &[Layer], lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c1_next = 1.0 - b1.powi(self.step as i32 + 1);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let rule = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = b1 * *m / c1_next + (1.0 - b1) * g / c1;
            *p -= lr * m_hat / ((*v / c2).sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| rule(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| rule(p, g, m, v));
        }
    }
}
