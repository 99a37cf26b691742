//! Fully connected networks with hand-written backpropagation.
//!
//! Inputs are batch-major (`batch x features`). Weights are stored
//! `out x in`, so a layer computes `z = x W^T + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MarlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|x| x.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiply `grad` in place by the derivative at pre-activation `z`
    /// (with `out` the activated value).
    fn backprop(self, grad: &mut Array2<f64>, z: &Array2<f64>, out: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad).and(out).for_each(|g, &y| *g *= 1.0 - y * y),
            Activation::Identity => {}
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Pre-activation of the output layer.
    pub fn output_pre(&self) -> &Array2<f64> {
        self.pre.last().expect("an MLP has at least one layer")
    }
}

/// Parameter-shaped gradient (or optimizer moment) storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.raw_dim())))
                .collect(),
        }
    }

    /// Flattened in parameter declaration order.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|(w, b)| w.iter().chain(b.iter()).map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm {
            let k = max_norm / norm;
            for (w, b) in &mut self.layers {
                w.mapv_inplace(|x| x * k);
                b.mapv_inplace(|x| x * k);
            }
        }
        norm
    }
}

impl Mlp {
    /// `sizes` lists every layer width including input and output. Weights
    /// and biases are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
                let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
                let activation = if l + 1 == n { output } else { hidden };
                Dense {
                    weights,
                    bias,
                    activation,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.nrows()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.nrows()))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.dims() == other.dims() && self.activations() == other.activations()
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|x| x.is_finite())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for layer in &self.layers {
            let z = h.dot(&layer.weights.t()) + &layer.bias;
            h = layer.activation.apply(&z);
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_owned();
        for layer in &self.layers {
            let z = h.dot(&layer.weights.t()) + &layer.bias;
            let out = layer.activation.apply(&z);
            cache.inputs.push(h);
            cache.pre.push(z);
            cache.outputs.push(out.clone());
            h = out;
        }
        (h, cache)
    }

    /// Given `dL/d(output)`, returns parameter gradients and `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        let last = self.layers.len() - 1;
        let mut g = grad_out.to_owned();
        self.layers[last]
            .activation
            .backprop(&mut g, &cache.pre[last], &cache.outputs[last]);
        self.backward_from_pre(cache, g)
    }

    /// Like [`Mlp::backward`], but starting from `dL/dz` of the output
    /// layer's pre-activation.
    pub fn backward_from_pre(&self, cache: &ForwardCache, grad_pre: Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_pre;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l != last {
                layer.activation.backprop(&mut g, &cache.pre[l], &cache.outputs[l]);
            }
            let dw = g.t().dot(&cache.inputs[l]);
            let db = g.sum_axis(Axis(0));
            g = g.dot(&layer.weights);
            grads.push((dw, db));
        }
        grads.reverse();
        (Gradients { layers: grads }, g)
    }

    /// Parameters in declaration order: per layer, weights row-major then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<(), MarlError> {
        if values.len() != self.parameter_count() {
            return Err(MarlError::ShapeMismatch {
                expected: format!("{} parameters", self.parameter_count()),
                found: format!("{} parameters", values.len()),
            });
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Mutable views of every parameter tensor, paired with the matching
    /// entries of `other`.
    pub(crate) fn zip_layers_mut<'a>(
        &'a mut self,
        other: &'a Gradients,
    ) -> impl Iterator<Item = (&'a mut Dense, &'a (Array2<f64>, Array1<f64>))> {
        self.layers.iter_mut().zip(other.layers.iter())
    }
}

/// `target <- xi * online + (1 - xi) * target`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, xi: f64) -> Result<(), MarlError> {
    if !target.same_shape(online) {
        return Err(MarlError::ShapeMismatch {
            expected: format!("{:?}", target.dims()),
            found: format!("{:?}", online.dims()),
        });
    }
    let keep = 1.0 - xi;
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weights)
            .and(&o.weights)
            .for_each(|t, &o| *t = xi * o + keep * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = xi * o + keep * *t);
    }
    Ok(())
}
