//! A small fully connected classifier with hand-written backpropagation.
//!
//! Layers are dense (`z = W a + b`, weights stored row-major `[out, in]`),
//! every hidden layer shares one activation, and the output layer is linear.
//! The loss is mean softmax cross-entropy over the batch, computed through
//! log-sum-exp so large logits cannot overflow.

use crate::error::{Error, Result};
use crate::numerics::{ParamGroup, ParamSet, Role, Tensor};
use crate::rng::SplitMix64;

use super::data::Dataset;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(0, z)`; the derivative at exactly `z == 0` is taken as 0.
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a = apply(z)`.
    /// For relu `a > 0` exactly when `z > 0`, so no pre-activation is needed.
    fn deriv_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Multi-layer perceptron; parameters live in a [`ParamSet`] with groups
/// named `layer{l}.weight` and `layer{l}.bias` in layer order.
#[derive(Debug, Clone)]
pub struct MlpModel {
    sizes: Vec<usize>,
    activation: Activation,
    params: ParamSet,
}

impl MlpModel {
    /// Builds a model with all parameters zero. `sizes` lists the layer
    /// widths from input to output and needs at least two entries.
    pub fn new(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Domain(format!(
                "an mlp needs at least input and output widths, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Domain(format!("zero-width layer in {sizes:?}")));
        }
        let mut groups = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            groups.push(ParamGroup {
                name: format!("layer{l}.weight"),
                value: Tensor::zeros(vec![fan_out, fan_in]),
                role: Role::Weight,
            });
            groups.push(ParamGroup {
                name: format!("layer{l}.bias"),
                value: Tensor::zeros(vec![fan_out]),
                role: Role::Bias,
            });
        }
        Ok(MlpModel {
            sizes: sizes.to_vec(),
            activation,
            params: ParamSet::new(groups)?,
        })
    }

    /// Standard uniform init: weights from `(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// drawn layer by layer in row-major order, biases left at zero.
    pub fn init_uniform(&mut self, rng: &mut SplitMix64) {
        for l in 0..self.sizes.len() - 1 {
            let bound = 1.0 / (self.sizes[l] as f64).sqrt();
            let weight = &mut self.params.groups_mut()[2 * l].value;
            for w in weight.data_mut() {
                *w = rng.next_in(-bound, bound);
            }
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.sizes[0] {
            return Err(Error::Domain(format!(
                "dataset dim {} does not match input width {}",
                data.dim(),
                self.sizes[0]
            )));
        }
        let out = *self.sizes.last().unwrap();
        if data.num_classes() != out {
            return Err(Error::Domain(format!(
                "dataset has {} classes but the output layer is {out} wide",
                data.num_classes()
            )));
        }
        Ok(())
    }

    /// Forward pass for one input; returns the output-layer logits.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.sizes[0] {
            return Err(Error::Domain(format!(
                "input has {} values, expected {}",
                x.len(),
                self.sizes[0]
            )));
        }
        let acts = self.forward(x);
        Ok(acts.last().unwrap().clone())
    }

    /// Activations per layer: `out[0]` is the input, `out[last]` the logits.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let weight = self.params.groups()[2 * l].value.data();
            let bias = self.params.groups()[2 * l + 1].value.data();
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &acts[l];
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let row = &weight[o * fan_in..(o + 1) * fan_in];
                let mut acc = bias[o];
                for (w, a) in row.iter().zip(prev.iter()) {
                    acc += w * a;
                }
                z[o] = if l < layers - 1 {
                    self.activation.apply(acc)
                } else {
                    acc
                };
            }
            acts.push(z);
        }
        acts
    }

    /// Mean softmax cross-entropy and its gradient over the batch `idx`.
    /// The gradient comes back as one tensor per parameter group, in the
    /// same order as [`MlpModel::params`].
    pub fn loss_and_grad(&self, data: &Dataset, idx: &[usize]) -> Result<(f64, Vec<Tensor>)> {
        self.check_dataset(data)?;
        if idx.is_empty() {
            return Err(Error::Domain("empty minibatch".into()));
        }
        for &i in idx {
            if i >= data.len() {
                return Err(Error::Domain(format!(
                    "minibatch index {i} out of range for {} samples",
                    data.len()
                )));
            }
        }
        let layers = self.sizes.len() - 1;
        let mut grads: Vec<Tensor> = self
            .params
            .groups()
            .iter()
            .map(|g| Tensor::zeros_like(&g.value))
            .collect();
        let mut loss_sum = 0.0;

        for &i in idx {
            let acts = self.forward(data.row(i));
            let logits = acts.last().unwrap();
            let label = data.label(i);

            // log-sum-exp with the max subtracted keeps exp() in range.
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            let lse = max + sum_exp.ln();
            loss_sum += lse - logits[label];

            // dL/dz for the output layer: softmax(z) - onehot(label).
            let mut delta: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
            delta[label] -= 1.0;

            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
                let prev = &acts[l];
                {
                    let gw = grads[2 * l].data_mut();
                    for o in 0..fan_out {
                        for j in 0..fan_in {
                            gw[o * fan_in + j] += delta[o] * prev[j];
                        }
                    }
                    let gb = grads[2 * l + 1].data_mut();
                    for o in 0..fan_out {
                        gb[o] += delta[o];
                    }
                }
                if l > 0 {
                    let weight = self.params.groups()[2 * l].value.data();
                    let mut prev_delta = vec![0.0; fan_in];
                    for (j, pd) in prev_delta.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for o in 0..fan_out {
                            acc += weight[o * fan_in + j] * delta[o];
                        }
                        *pd = acc * self.activation.deriv_from_output(prev[j]);
                    }
                    delta = prev_delta;
                }
            }
        }

        let n = idx.len() as f64;
        for g in &mut grads {
            for v in g.data_mut() {
                *v /= n;
            }
        }
        Ok((loss_sum / n, grads))
    }

    /// Gradient of the mean loss over the whole dataset.
    pub fn full_gradient(&self, data: &Dataset) -> Result<(f64, Vec<Tensor>)> {
        let idx: Vec<usize> = (0..data.len()).collect();
        self.loss_and_grad(data, &idx)
    }

    /// Fraction of samples whose argmax logit matches the label. Ties go to
    /// the lowest class index.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        self.check_dataset(data)?;
        if data.is_empty() {
            return Err(Error::Domain("accuracy over an empty dataset".into()));
        }
        let mut hits = 0usize;
        for i in 0..data.len() {
            let logits = self.logits(data.row(i))?;
            let mut best = 0usize;
            for (c, z) in logits.iter().enumerate() {
                if *z > logits[best] {
                    best = c;
                }
            }
            if best == data.label(i) {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}
