use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layer::{Conv2d, Dense, Layer};
use super::Tensor;
use crate::{Error, Result};

/// Gradient buffers for one layer; empty for parameterless layers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros(weights: usize, biases: usize) -> Self {
        Self {
            weight: vec![0.0; weights],
            bias: vec![0.0; biases],
        }
    }
}

/// Per-layer gradients matching a [`Network`] layer for layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<ParamGrad>,
}

impl Grads {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| match l.params() {
                    Some((w, b)) => ParamGrad::zeros(w.len(), b.len()),
                    None => ParamGrad::default(),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Inputs and outputs of every layer from one forward pass; required by
/// [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    activations: Vec<Tensor>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace holds the input at least")
    }
}

/// A sequential stack of layers. When `head` is set, the final layer is a
/// dense classification head that can be swapped without touching the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub head: bool,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let net = Self {
            input_shape,
            layers,
            head: false,
        };
        net.output_shape()?;
        Ok(net)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(self.input_shape.clone(), |shape, l| l.output_shape(&shape))
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape {
                expected: self.input_shape.clone(),
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for l in &self.layers {
            let next = l.forward(activations.last().unwrap())?;
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    /// Backpropagates `grad_out` (dL/d output) through a recorded pass,
    /// adding parameter gradients into `grads`; returns dL/d input.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::invalid(
                "backward called with a trace that was not recorded by this network",
            ));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::invalid("gradient buffer does not match the network"));
        }
        let mut g = grad_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            g = l.backward(&trace.activations[i], &trace.activations[i + 1], &g, &mut grads.layers[i])?;
        }
        Ok(g)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    pub fn head_layer(&self) -> Option<&Dense> {
        match (self.head, self.layers.last()) {
            (true, Some(Layer::Dense(d))) => Some(d),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }
}

/// Builds a [`Network`] layer by layer, tracking shapes, then initializes
/// weights: He-uniform where the next layer is a ReLU, Glorot-uniform
/// otherwise. Biases start at zero.
#[derive(Clone, Debug)]
pub struct NetworkBuilder {
    input_shape: Vec<usize>,
    shape: Vec<usize>,
    layers: Vec<Layer>,
    head: bool,
}

impl NetworkBuilder {
    pub fn new(input_shape: Vec<usize>) -> Self {
        Self {
            shape: input_shape.clone(),
            input_shape,
            layers: Vec::new(),
            head: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn layer(mut self, layer: Layer) -> Result<Self> {
        self.shape = layer.output_shape(&self.shape)?;
        self.layers.push(layer);
        Ok(self)
    }

    pub fn conv(self, out_channels: usize, stride: usize) -> Result<Self> {
        let in_channels = match *self.shape.as_slice() {
            [c, _, _] => c,
            _ => {
                return Err(Error::Shape {
                    expected: vec![0, 0, 0],
                    actual: self.shape.clone(),
                })
            }
        };
        self.layer(Layer::Conv2d(Conv2d::zeros(in_channels, out_channels, stride)))
    }

    pub fn dense(self, outputs: usize) -> Result<Self> {
        let inputs = match *self.shape.as_slice() {
            [n] => n,
            _ => {
                return Err(Error::Shape {
                    expected: vec![0],
                    actual: self.shape.clone(),
                })
            }
        };
        self.layer(Layer::Dense(Dense::zeros(inputs, outputs)))
    }

    pub fn relu(self) -> Result<Self> {
        self.layer(Layer::Relu)
    }

    pub fn sigmoid(self) -> Result<Self> {
        self.layer(Layer::Sigmoid)
    }

    pub fn flatten(self) -> Result<Self> {
        self.layer(Layer::Flatten)
    }

    pub fn upsample(self) -> Result<Self> {
        self.layer(Layer::Upsample2x)
    }

    /// Appends a dense head of `outputs` classes and marks it detachable.
    pub fn head(mut self, outputs: usize) -> Result<Self> {
        self = self.dense(outputs)?;
        self.head = true;
        Ok(self)
    }

    pub fn build(self, rng: &mut impl Rng) -> Network {
        let mut layers = self.layers;
        for i in 0..layers.len() {
            let feeds_relu = matches!(layers.get(i + 1), Some(Layer::Relu));
            init_layer(&mut layers[i], feeds_relu, rng);
        }
        Network {
            input_shape: self.input_shape,
            layers,
            head: self.head,
        }
    }
}

pub(crate) fn init_layer(layer: &mut Layer, feeds_relu: bool, rng: &mut impl Rng) {
    let (fan_in, fan_out, weight) = match layer {
        Layer::Conv2d(c) => (c.in_channels * 9, c.out_channels * 9, &mut c.weight),
        Layer::Dense(d) => (d.inputs, d.outputs, &mut d.weight),
        _ => return,
    };
    let limit = if feeds_relu {
        (6.0 / fan_in as f64).sqrt()
    } else {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    };
    for w in weight.iter_mut() {
        *w = rng.random_range(-limit..=limit);
    }
    if let Some((_, b)) = layer.params_mut() {
        b.fill(0.0);
    }
}

const CHUNK: usize = 4;

/// Sums per-sample gradients over a mini-batch.
///
/// `loss` maps (sample index, network output) to (loss, dL/d output).
/// Samples are processed in parallel in fixed chunks of four; with
/// `deterministic` the chunk sums are combined in index order, otherwise by
/// a parallel tree reduction.
pub fn accumulate_batch<F>(
    net: &Network,
    inputs: &[&Tensor],
    deterministic: bool,
    loss: F,
) -> Result<(Grads, f64)>
where
    F: Fn(usize, &Tensor) -> Result<(f64, Tensor)> + Sync,
{
    let chunk_result = |(c, chunk): (usize, &[&Tensor])| -> Result<(Grads, f64)> {
        let mut grads = Grads::zeros_like(net);
        let mut total = 0.0;
        for (j, x) in chunk.iter().enumerate() {
            let trace = net.forward_trace(x)?;
            let (l, g) = loss(c * CHUNK + j, trace.output())?;
            total += l;
            net.backward(&trace, &g, &mut grads)?;
        }
        Ok((grads, total))
    };
    let parts = inputs.par_chunks(CHUNK).enumerate().map(chunk_result);
    let combine = |a: Result<(Grads, f64)>, b: Result<(Grads, f64)>| {
        let (mut ga, la) = a?;
        let (gb, lb) = b?;
        ga.add_assign(&gb);
        Ok((ga, la + lb))
    };
    if deterministic {
        let parts: Vec<_> = parts.collect();
        parts
            .into_iter()
            .fold(Ok((Grads::zeros_like(net), 0.0)), combine)
    } else {
        parts.reduce(|| Ok((Grads::zeros_like(net), 0.0)), combine)
    }
}

impl Network {
    /// Glorot-uniform initialization for a layer feeding a softmax.
    pub fn init_head(layer: &mut Layer, rng: &mut impl Rng) {
        init_layer(layer, false, rng);
    }
}
