//! Multilayer perceptron with ReLU hidden layers and a linear output layer.
//!
//! Softmax is not part of the network: [`Mlp::forward`] returns logits and
//! the loss or divergence layer applies `log_softmax` itself. Backward
//! propagation is hand-derived and returns gradients for both the
//! parameters and the input.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::numerics::{log_softmax, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Affine map `x·W + b` followed by an activation. `W` is `[in×out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    weights: Tensor,
    biases: Tensor,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: Tensor, biases: Tensor, activation: Activation) -> Result<Self> {
        let [_, out] = weights.shape() else {
            return Err(Error::dim(format!(
                "layer weights must be a matrix, got {:?}",
                weights.shape()
            )));
        };
        if biases.shape() != [*out] {
            return Err(Error::dim(format!(
                "bias shape {:?} does not match {out} outputs",
                biases.shape()
            )));
        }
        Ok(Layer {
            weights,
            biases,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn biases(&self) -> &Tensor {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Feed-forward classifier. Parameter updates go through methods that
/// stamp a new generation so caches from older parameters are rejected.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Layer>,
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// He-initialized network: weights `N(0, 2/fan_in)`, zero biases.
    pub fn new(input_dim: usize, hidden: &[usize], classes: usize, rng: &mut Rng) -> Result<Self> {
        Self::build(input_dim, hidden, classes, |fan_in, fan_out| {
            rng.normal_tensor(&[fan_in, fan_out], (2.0 / fan_in as f64).sqrt())
        })
    }

    /// All parameters zero; outputs the uniform distribution everywhere.
    pub fn zeros(input_dim: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        Self::build(input_dim, hidden, classes, |i, o| Tensor::zeros(&[i, o]))
    }

    fn build(
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        mut init: impl FnMut(usize, usize) -> Tensor,
    ) -> Result<Self> {
        if input_dim == 0 || classes < 2 || hidden.contains(&0) {
            return Err(Error::config(format!(
                "invalid architecture: input {input_dim}, hidden {hidden:?}, classes {classes}"
            )));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                weights: init(w[0], w[1]),
                biases: Tensor::zeros(&[w[1]]),
                activation: if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            })
            .collect();
        Ok(Mlp {
            layers,
            generation: fresh_generation(),
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::config("network needs at least one layer"));
        };
        if last.activation != Activation::Identity {
            return Err(Error::config("final layer must use the identity activation"));
        }
        if last.out_dim() < 2 {
            return Err(Error::config("network needs at least 2 output classes"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Mlp {
            layers,
            generation: fresh_generation(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::out_dim)
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Logits for a `[batch×I]` input together with the activations needed
    /// by [`Mlp::backward`].
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let acts = self.propagate(x)?;
        let logits = acts.last().cloned().expect("at least one layer");
        Ok((
            logits,
            ForwardCache {
                generation: self.generation,
                activations: acts,
            },
        ))
    }

    /// Forward pass without retaining a cache.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut acts = self.propagate(x)?;
        Ok(acts.pop().expect("at least one layer"))
    }

    pub fn log_probs(&self, x: &Tensor) -> Result<Tensor> {
        log_softmax(&self.logits(x)?)
    }

    fn propagate(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::dim(format!(
                "network expects [batch x {}] input, got {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        record(|c| c.forward += 1);
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let mut z = acts.last().unwrap().matmul(&layer.weights)?;
            let b = layer.biases.data();
            let relu = layer.activation == Activation::Relu;
            for row in z.data_mut().chunks_mut(b.len()) {
                for (v, &bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if relu && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        acts.last().unwrap().ensure_finite("forward logits")?;
        Ok(acts)
    }

    /// Exact gradients of the scalar whose logit gradient is `d_logits`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &Tensor) -> Result<GradientBundle> {
        if cache.generation != self.generation
            || cache.activations.len() != self.layers.len() + 1
        {
            return Err(Error::Usage(
                "forward cache does not belong to the current network parameters".into(),
            ));
        }
        let logits = cache.activations.last().unwrap();
        if d_logits.shape() != logits.shape() {
            return Err(Error::dim(format!(
                "d_logits shape {:?} does not match logits {:?}",
                d_logits.shape(),
                logits.shape()
            )));
        }
        record(|c| c.backward += 1);
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_logits.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                let out = &cache.activations[i + 1];
                for (d, &a) in delta.data_mut().iter_mut().zip(out.data()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.activations[i];
            let d_w = input.matmul_tn(&delta)?;
            let mut d_b = Tensor::zeros(&[layer.out_dim()]);
            for row in delta.row_iter() {
                for (acc, &v) in d_b.data_mut().iter_mut().zip(row) {
                    *acc += v;
                }
            }
            grads.push(LayerGrad {
                weights: d_w,
                biases: d_b,
            });
            delta = delta.matmul_nt(&layer.weights)?;
        }
        grads.reverse();
        Ok(GradientBundle {
            d_theta: ParamGrads { layers: grads },
            d_input: delta,
        })
    }

    /// `θ ← θ + scale · delta`.
    pub fn apply_delta(&mut self, delta: &ParamGrads, scale: f64) -> Result<()> {
        delta.check_matches(self)?;
        for (layer, g) in self.layers.iter_mut().zip(&delta.layers) {
            layer.weights.axpy(scale, &g.weights)?;
            layer.biases.axpy(scale, &g.biases)?;
        }
        self.generation = fresh_generation();
        for layer in &self.layers {
            layer.weights.ensure_finite("parameters")?;
            layer.biases.ensure_finite("parameters")?;
        }
        Ok(())
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(l.biases.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::dim(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        let mut rest = values;
        for l in &mut self.layers {
            for t in [&mut l.weights, &mut l.biases] {
                let n = t.len();
                t.data_mut().copy_from_slice(&rest[..n]);
                rest = &rest[n..];
            }
        }
        self.generation = fresh_generation();
        Ok(())
    }
}

/// Activations retained by [`Mlp::forward`]: the input and every layer output.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    generation: u64,
    activations: Vec<Tensor>,
}

impl ForwardCache {
    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    pub fn logits(&self) -> &Tensor {
        self.activations.last().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Tensor,
    pub biases: Tensor,
}

/// Gradient (or update) with the same shapes as a network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrad>,
}

impl ParamGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        ParamGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Tensor::zeros(l.weights.shape()),
                    biases: Tensor::zeros(l.biases.shape()),
                })
                .collect(),
        }
    }

    fn check_compatible(&self, other: &ParamGrads) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.shape() == b.weights.shape() && a.biases.shape() == b.biases.shape()
            });
        if same {
            Ok(())
        } else {
            Err(Error::dim("parameter gradient shapes differ"))
        }
    }

    pub fn check_matches(&self, net: &Mlp) -> Result<()> {
        self.check_compatible(&ParamGrads::zeros_like(net))
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &ParamGrads) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.axpy(alpha, &b.weights)?;
            a.biases.axpy(alpha, &b.biases)?;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> ParamGrads {
        ParamGrads {
            layers: self
                .layers
                .iter()
                .map(|g| LayerGrad {
                    weights: g.weights.scale(alpha),
                    biases: g.biases.scale(alpha),
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|g| [&g.weights, &g.biases])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|g| [&mut g.weights, &mut g.biases])
    }

    /// Same ordering as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.tensors().map(|t| t.norm().powi(2)).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().fold(0.0, |m, t| m.max(t.max_abs()))
    }
}

/// Gradients with respect to the parameters and to the input batch.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub d_theta: ParamGrads,
    pub d_input: Tensor,
}

/// Mean negative log-likelihood and its gradient w.r.t. the logits,
/// `(softmax − onehot) / batch`.
pub fn nll_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let log_p = log_softmax(logits)?;
    let (batch, classes) = (log_p.rows(), log_p.cols());
    if labels.len() != batch {
        return Err(Error::dim(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::data(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let inv = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = log_p.map(f64::exp);
    for (i, &y) in labels.iter().enumerate() {
        loss -= log_p.get(i, y);
        let row = grad.row_mut(i);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Ok((loss * inv, grad))
}

/// Binary keep-mask for inverted dropout on the input layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    keep_probability: f64,
    mask: Tensor,
}

impl DropoutMask {
    pub fn sample(shape: &[usize], keep_probability: f64, rng: &mut Rng) -> Result<Self> {
        if !(keep_probability > 0.0 && keep_probability <= 1.0) {
            return Err(Error::config(format!(
                "dropout keep probability {keep_probability} outside (0, 1]"
            )));
        }
        let mut mask = Tensor::zeros(shape);
        for m in mask.data_mut() {
            *m = if keep_probability >= 1.0 || rng.bernoulli(keep_probability) {
                1.0
            } else {
                0.0
            };
        }
        Ok(DropoutMask {
            keep_probability,
            mask,
        })
    }

    pub fn keep_probability(&self) -> f64 {
        self.keep_probability
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.mask.shape() {
            return Err(Error::dim("dropout mask shape differs from input"));
        }
        let scale = 1.0 / self.keep_probability;
        let mut out = x.clone();
        for (v, &m) in out.data_mut().iter_mut().zip(self.mask.data()) {
            *v *= m * scale;
        }
        Ok(out)
    }
}

/// Train-time input dropout: each coordinate is kept with probability
/// `keep_probability` and survivors are scaled by its inverse.
pub fn apply_dropout(x: &Tensor, keep_probability: f64, rng: &mut Rng) -> Result<Tensor> {
    DropoutMask::sample(x.shape(), keep_probability, rng)?.apply(x)
}

/// Number of forward and backward propagations issued on this thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PropagationCounts {
    pub forward: usize,
    pub backward: usize,
}

impl std::ops::Sub for PropagationCounts {
    type Output = PropagationCounts;

    fn sub(self, rhs: Self) -> Self {
        PropagationCounts {
            forward: self.forward - rhs.forward,
            backward: self.backward - rhs.backward,
        }
    }
}

thread_local! {
    static COUNTS: Cell<PropagationCounts> = const { Cell::new(PropagationCounts { forward: 0, backward: 0 }) };
}

fn record(f: impl FnOnce(&mut PropagationCounts)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

pub fn propagation_counts() -> PropagationCounts {
    COUNTS.with(Cell::get)
}

/// Runs `f` and reports how many propagations it performed on this thread.
pub fn count_propagations<T>(f: impl FnOnce() -> T) -> (T, PropagationCounts) {
    let before = propagation_counts();
    let out = f();
    (out, propagation_counts() - before)
}
