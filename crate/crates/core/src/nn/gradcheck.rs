//! Finite-difference validation of analytic parameter gradients.

use serde::Serialize;

use super::{NetworkParams, ParamGrads};
use crate::error::{Error, Result};

/// Relative central-difference step: each parameter `p` is perturbed by `FD_STEP * max(1, |p|)`.
pub const FD_STEP: f64 = 1e-4;

/// Gradient magnitudes below this floor are compared in absolute terms.
const SCALE_FLOOR: f64 = 1e-6;

/// A scalar function of network parameters with a claimed analytic gradient.
pub trait Objective {
    fn value(&self, net: &NetworkParams) -> Result<f64>;
    fn gradient(&self, net: &NetworkParams) -> Result<ParamGrads>;
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerCheck {
    pub layer: usize,
    /// `max_i |analytic_i - numeric_i|` divided by the layer's largest gradient magnitude.
    pub max_rel_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub layers: Vec<LayerCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| !l.flagged)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }

    pub fn flagged_layers(&self) -> Vec<usize> {
        self.layers.iter().filter(|l| l.flagged).map(|l| l.layer).collect()
    }
}

fn finite_value(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric { layer: None, msg: format!("objective returned {v}") })
    }
}

fn layer_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(SCALE_FLOOR);
    let worst = analytic
        .iter()
        .zip(numeric)
        .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()));
    worst / scale
}

fn set_param(net: &mut NetworkParams, layer: usize, is_bias: bool, i: usize, v: f64) {
    if is_bias {
        net.biases_mut(layer)[i] = v;
    } else {
        net.weights_mut(layer)[i] = v;
    }
}

/// Compares `objective.gradient` against central differences of `objective.value`, layer by layer.
pub fn grad_check<O: Objective + ?Sized>(
    net: &NetworkParams,
    objective: &O,
    tolerance: f64,
) -> Result<GradCheckReport> {
    finite_value(objective.value(net)?)?;
    let analytic = objective.gradient(net)?;
    if !analytic.same_shape(net) {
        return Err(Error::shape("analytic gradient shape differs from network"));
    }

    let mut probe = net.clone();
    let mut layers = Vec::with_capacity(net.layers().len());
    for layer in 0..net.layers().len() {
        let mut numeric = Vec::with_capacity(net.weights(layer).len() + net.biases(layer).len());
        for is_bias in [false, true] {
            let len = if is_bias { net.biases(layer).len() } else { net.weights(layer).len() };
            for i in 0..len {
                let orig = if is_bias { net.biases(layer)[i] } else { net.weights(layer)[i] };
                let h = FD_STEP * orig.abs().max(1.0);
                let mut eval = |v: f64| -> Result<f64> {
                    set_param(&mut probe, layer, is_bias, i, v);
                    finite_value(objective.value(&probe)?)
                };
                let plus = eval(orig + h)?;
                let minus = eval(orig - h)?;
                set_param(&mut probe, layer, is_bias, i, orig);
                numeric.push((plus - minus) / (2.0 * h));
            }
        }
        let mut claimed = analytic.weights[layer].clone();
        claimed.extend_from_slice(&analytic.biases[layer]);
        let err = layer_error(&claimed, &numeric);
        layers.push(LayerCheck { layer, max_rel_error: err, flagged: !(err <= tolerance) });
    }
    Ok(GradCheckReport { tolerance, layers })
}
