//! Minimal feed-forward network engine.
//!
//! A network is an ordered stack of dense or 2D convolution layers with an
//! optional rectifier after each. All math is `f64`. Weights of a dense
//! layer are row-major `(out_dim, in_dim)`; convolution weights are laid out
//! `(out_channels, in_channels, kernel, kernel)` and activations are
//! channel-planar `(channels, height, width)`.

mod checkpoint;
mod gradcheck;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, GradCheckReport, LayerCheck, Objective, FD_STEP};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    },
    /// Valid (unpadded) 2D convolution over a channel-planar input.
    Conv2d {
        in_channels: usize,
        in_height: usize,
        in_width: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn in_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, .. } => in_dim,
            LayerSpec::Conv2d { in_channels, in_height, in_width, .. } => {
                in_channels * in_height * in_width
            }
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { out_dim, .. } => out_dim,
            LayerSpec::Conv2d { out_channels, .. } => {
                let (oh, ow) = self.conv_out_hw();
                out_channels * oh * ow
            }
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => activation,
        }
    }

    fn conv_out_hw(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv2d { in_height, in_width, kernel, stride, .. } => {
                if kernel > in_height || kernel > in_width || stride == 0 {
                    (0, 0)
                } else {
                    ((in_height - kernel) / stride + 1, (in_width - kernel) / stride + 1)
                }
            }
            LayerSpec::Dense { .. } => (0, 0),
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, out_dim, .. } => in_dim * out_dim,
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                out_channels * in_channels * kernel * kernel
            }
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { out_dim, .. } => out_dim,
            LayerSpec::Conv2d { out_channels, .. } => out_channels,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { in_dim, out_dim, .. } => (in_dim, out_dim),
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                (in_channels * kernel * kernel, out_channels * kernel * kernel)
            }
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        match *self {
            LayerSpec::Dense { in_dim, out_dim, .. } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Error::layer_shape(index, "dense dims must be > 0"));
                }
            }
            LayerSpec::Conv2d { in_channels, in_height, in_width, out_channels, kernel, stride, .. } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::layer_shape(index, "conv channels, kernel and stride must be > 0"));
                }
                if kernel > in_height || kernel > in_width {
                    return Err(Error::layer_shape(
                        index,
                        format!("kernel {kernel} larger than input {in_height}x{in_width}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Weights and biases of one feed-forward network together with its layer stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    layers: Vec<LayerSpec>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Gradients (or optimizer accumulators) shaped exactly like a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(net: &NetworkParams) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Iterates over `(layer, weights, biases)`.
    pub fn layers(&self) -> impl Iterator<Item = (usize, &[f64], &[f64])> {
        self.weights
            .iter()
            .zip(&self.biases)
            .enumerate()
            .map(|(i, (w, b))| (i, w.as_slice(), b.as_slice()))
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.iter().all(|&x| x == 0.0))
    }

    pub(crate) fn same_shape(&self, net: &NetworkParams) -> bool {
        self.weights.len() == net.weights.len()
            && self.biases.len() == net.biases.len()
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.len() == b.len())
    }
}

/// Builds the layer stack of a rectifier MLP: `input -> hidden... -> classes`.
pub fn mlp_layers(input_dim: usize, hidden: &[usize], classes: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &h in hidden {
        layers.push(LayerSpec::Dense { in_dim: prev, out_dim: h, activation: Activation::Relu });
        prev = h;
    }
    layers.push(LayerSpec::Dense { in_dim: prev, out_dim: classes, activation: Activation::Identity });
    layers
}

fn check_stack(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::shape("network has no layers"));
    }
    for (i, l) in layers.iter().enumerate() {
        l.validate(i)?;
        if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
            return Err(Error::layer_shape(
                i,
                format!("expects {} inputs but previous layer yields {}", l.in_dim(), layers[i - 1].out_dim()),
            ));
        }
    }
    Ok(())
}

impl NetworkParams {
    /// Allocates a network with fan-in/fan-out scaled uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        check_stack(&layers)?;
        let mut weights = Vec::with_capacity(layers.len());
        for l in &layers {
            let (fan_in, fan_out) = l.fans();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite init bound");
            weights.push((0..l.weight_len()).map(|_| dist.sample(rng)).collect());
        }
        let biases = layers.iter().map(|l| vec![0.0; l.bias_len()]).collect();
        Ok(Self { layers, weights, biases })
    }

    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        check_stack(&layers)?;
        let weights = layers.iter().map(|l| vec![0.0; l.weight_len()]).collect();
        let biases = layers.iter().map(|l| vec![0.0; l.bias_len()]).collect();
        Ok(Self { layers, weights, biases })
    }

    pub fn from_parts(layers: Vec<LayerSpec>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        check_stack(&layers)?;
        if weights.len() != layers.len() || biases.len() != layers.len() {
            return Err(Error::shape("weight/bias count differs from layer count"));
        }
        for (i, l) in layers.iter().enumerate() {
            if weights[i].len() != l.weight_len() || biases[i].len() != l.bias_len() {
                return Err(Error::layer_shape(
                    i,
                    format!(
                        "expected {} weights and {} biases, got {} and {}",
                        l.weight_len(),
                        l.bias_len(),
                        weights[i].len(),
                        biases[i].len()
                    ),
                ));
            }
            if weights[i].iter().chain(&biases[i]).any(|v| !v.is_finite()) {
                return Err(Error::Numeric { layer: Some(i), msg: "non-finite parameter".into() });
            }
        }
        Ok(Self { layers, weights, biases })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Flat view of every parameter, layer by layer (weights then biases).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub(crate) fn weight_bias_mut(&mut self) -> (&mut [Vec<f64>], &mut [Vec<f64>]) {
        (&mut self.weights, &mut self.biases)
    }

    /// Computes the logits for every row of `batch`.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        let mut acts = self.forward_trace(batch)?;
        Ok(acts.pop().expect("trace holds at least the input"))
    }

    /// Returns `[input, out_0, out_1, ..., logits]`.
    fn forward_trace(&self, batch: &Matrix) -> Result<Vec<Matrix>> {
        if batch.cols() != self.input_dim() {
            return Err(Error::layer_shape(
                0,
                format!("batch has {} features, layer expects {}", batch.cols(), self.input_dim()),
            ));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(batch.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &acts[i];
            let mut out = Matrix::zeros(input.rows(), layer.out_dim());
            for n in 0..input.rows() {
                layer_forward(layer, &self.weights[i], &self.biases[i], input.row(n), out.row_mut(n));
            }
            let act = layer.activation();
            if act != Activation::Identity {
                out.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Gradient of `mean_n <logit_grads[n], logits[n]>` with respect to every parameter.
    pub fn backward(&self, batch: &Matrix, logit_grads: &Matrix) -> Result<ParamGrads> {
        let acts = self.forward_trace(batch)?;
        if logit_grads.rows() != batch.rows() || logit_grads.cols() != self.output_dim() {
            return Err(Error::shape(format!(
                "logit gradients are {}x{}, forward output is {}x{}",
                logit_grads.rows(),
                logit_grads.cols(),
                batch.rows(),
                self.output_dim()
            )));
        }
        let mut grads = ParamGrads::zeros_like(self);
        let n = batch.rows();
        if n == 0 {
            return Ok(grads);
        }
        let mut delta = logit_grads.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation();
            if act != Activation::Identity {
                for (d, &o) in delta.as_mut_slice().iter_mut().zip(acts[i + 1].as_slice()) {
                    *d *= act.grad_from_output(o);
                }
            }
            let input = &acts[i];
            let need_prev = i > 0;
            let mut prev = if need_prev { Matrix::zeros(n, layer.in_dim()) } else { Matrix::zeros(0, 0) };
            for s in 0..n {
                let prev_row = if need_prev { Some(prev.row_mut(s)) } else { None };
                layer_backward(
                    layer,
                    &self.weights[i],
                    input.row(s),
                    delta.row(s),
                    &mut grads.weights[i],
                    &mut grads.biases[i],
                    prev_row,
                );
            }
            if need_prev {
                delta = prev;
            }
        }
        grads.scale(1.0 / n as f64);
        Ok(grads)
    }
}

fn layer_forward(layer: &LayerSpec, w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    match *layer {
        LayerSpec::Dense { in_dim, .. } => {
            for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(in_dim).zip(b)) {
                *o = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            }
        }
        LayerSpec::Conv2d { in_channels, in_height, in_width, out_channels, kernel, stride, .. } => {
            let (oh, ow) = layer.conv_out_hw();
            for oc in 0..out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[oc];
                        for ic in 0..in_channels {
                            for ky in 0..kernel {
                                let iy = oy * stride + ky;
                                let xrow = &x[(ic * in_height + iy) * in_width..];
                                let wrow = &w[((oc * in_channels + ic) * kernel + ky) * kernel..];
                                for kx in 0..kernel {
                                    acc += wrow[kx] * xrow[ox * stride + kx];
                                }
                            }
                        }
                        out[(oc * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
    }
}

/// Accumulates parameter gradients for one sample and optionally writes the input gradient.
fn layer_backward(
    layer: &LayerSpec,
    w: &[f64],
    x: &[f64],
    delta: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    match *layer {
        LayerSpec::Dense { in_dim, .. } => {
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
                for (g, &xi) in grow.iter_mut().zip(x) {
                    *g += d * xi;
                }
                if let Some(dx) = dx.as_deref_mut() {
                    let wrow = &w[o * in_dim..(o + 1) * in_dim];
                    for (p, &wi) in dx.iter_mut().zip(wrow) {
                        *p += d * wi;
                    }
                }
            }
        }
        LayerSpec::Conv2d { in_channels, in_height, in_width, out_channels, kernel, stride, .. } => {
            let (oh, ow) = layer.conv_out_hw();
            for oc in 0..out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let d = delta[(oc * oh + oy) * ow + ox];
                        if d == 0.0 {
                            continue;
                        }
                        gb[oc] += d;
                        for ic in 0..in_channels {
                            for ky in 0..kernel {
                                let iy = oy * stride + ky;
                                let xbase = (ic * in_height + iy) * in_width + ox * stride;
                                let wbase = ((oc * in_channels + ic) * kernel + ky) * kernel;
                                for kx in 0..kernel {
                                    gw[wbase + kx] += d * x[xbase + kx];
                                    if let Some(dx) = dx.as_deref_mut() {
                                        dx[xbase + kx] += d * w[wbase + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
