use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Layer widths: `input -> hidden[0] -> hidden[1] -> classes`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: [usize; 2],
    pub classes: usize,
}

impl MlpShape {
    pub fn new(input: usize) -> Self {
        MlpShape { input, hidden: [25, 10], classes: 4 }
    }

    pub fn widths(&self) -> [usize; 4] {
        [self.input, self.hidden[0], self.hidden[1], self.classes]
    }
}

/// Fully connected layer, `weights` row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, &b)| dot(row, x) + b)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// ReLU hidden layers and a softmax output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    pub layers: Vec<Dense<T>>,
}

/// Intermediate activations kept for the backward pass.
struct Trace<T> {
    /// Inputs to each layer (post-activation of the previous one).
    inputs: Vec<Vec<T>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<T>>,
    probs: Vec<T>,
}

pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of one prediction, with the probability floored at 1e-12.
pub fn loss<T: Scalar>(probs: &[T], label: usize) -> T {
    -probs[label].max(T::of(1e-12)).ln()
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> MlpModel<T> {
    pub fn zeros(shape: MlpShape) -> Self {
        let w = shape.widths();
        MlpModel { layers: (0..3).map(|l| Dense::zeros(w[l], w[l + 1])).collect() }
    }

    /// He-normal weights (`sd = sqrt(2 / fan_in)`) and zero biases, drawn
    /// layer by layer in row-major order.
    pub fn he_init<R: Rng>(shape: MlpShape, rng: &mut R) -> Self {
        let mut m = Self::zeros(shape);
        for layer in &mut m.layers {
            let sd = (2.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                let z: f64 = StandardNormal.sample(rng);
                *w = T::of(z * sd);
            }
        }
        m
    }

    pub fn shape(&self) -> MlpShape {
        MlpShape {
            input: self.layers[0].inputs,
            hidden: [self.layers[0].outputs, self.layers[1].outputs],
            classes: self.layers[2].outputs,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Parameters flattened layer by layer, weights before bias.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.param_count());
        let mut pos = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn trace(&self, x: &[T]) -> Trace<T> {
        let mut inputs = Vec::with_capacity(3);
        let mut pre = Vec::with_capacity(3);
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&a);
            inputs.push(a);
            a = if i + 1 < self.layers.len() {
                z.iter().map(|&v| v.max(T::zero())).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        let probs = softmax(&a);
        Trace { inputs, pre, probs }
    }

    /// Class probabilities for one input.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.layers[0].inputs {
            return Err(Error::DimError { expected: self.layers[0].inputs, found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericError("classifier input"));
        }
        Ok(self.trace(x).probs)
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        self.forward(x).map(|p| argmax(&p))
    }

    /// Mean cross-entropy over the batch and its gradient, flattened like
    /// [`MlpModel::params`].
    pub fn backward(&self, batch: &[(&[T], usize)]) -> (T, Vec<T>) {
        let mut grads: Vec<Dense<T>> =
            self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        let mut total = T::zero();
        for &(x, label) in batch {
            let tr = self.trace(x);
            total = total + loss(&tr.probs, label);
            let mut delta: Vec<T> = tr.probs.clone();
            delta[label] = delta[label] - T::one();
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let g = &mut grads[l];
                let input = &tr.inputs[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    g.bias[o] = g.bias[o] + d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, &a) in row.iter_mut().zip(input) {
                        *w = *w + d * a;
                    }
                }
                if l == 0 {
                    break;
                }
                let prev_pre = &tr.pre[l - 1];
                let mut next = vec![T::zero(); layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n = *n + d * w;
                    }
                }
                for (n, &z) in next.iter_mut().zip(prev_pre) {
                    if z <= T::zero() {
                        *n = T::zero();
                    }
                }
                delta = next;
            }
        }
        let inv = T::one() / T::of(batch.len().max(1) as f64);
        let mut flat = Vec::with_capacity(self.param_count());
        for g in &grads {
            flat.extend(g.weights.iter().map(|&v| v * inv));
            flat.extend(g.bias.iter().map(|&v| v * inv));
        }
        (total * inv, flat)
    }

    /// Mean loss without gradients.
    pub fn mean_loss(&self, batch: &[(&[T], usize)]) -> T {
        let total: T = batch.iter().map(|&(x, y)| loss(&self.trace(x).probs, y)).sum();
        total / T::of(batch.len().max(1) as f64)
    }
}
