use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{NetworkParams, ParamGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Stochastic gradient descent with heavy-ball momentum.
    Sgd,
    /// Adaptive moment estimation; `momentum` is used as the first-moment decay.
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config("optimizer", format!("unknown optimizer `{other}`"))),
        }
    }
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Sgd, lr: 0.05, momentum: 0.9, weight_decay: 0.0 }
    }
}

impl OptimizerConfig {
    pub const ADAM_BETA2: f64 = 0.999;
    pub const ADAM_EPS: f64 = 1e-8;

    pub fn validate(&self, field: &str) -> Result<()> {
        // lr = 0 is allowed: it pins a network in place.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("{field}.lr"), "must be a finite non-negative number"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("{field}.momentum"), "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!("{field}.weight_decay"), "must be non-negative"));
        }
        Ok(())
    }
}

/// Optimizer hyperparameters plus per-parameter accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    config: OptimizerConfig,
    lr: f64,
    steps: u64,
    first: ParamGrads,
    second: ParamGrads,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, net: &NetworkParams) -> Self {
        Self {
            config,
            lr: config.lr,
            steps: 0,
            first: ParamGrads::zeros_like(net),
            second: ParamGrads::zeros_like(net),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Momentum buffer (SGD) or first moment (Adam).
    pub fn first_moment(&self) -> &ParamGrads {
        &self.first
    }

    pub fn second_moment(&self) -> &ParamGrads {
        &self.second
    }

    /// Applies one update. Inputs are validated before anything is mutated.
    pub fn step(&mut self, net: &mut NetworkParams, grads: &ParamGrads) -> Result<()> {
        if !grads.same_shape(net) || !self.first.same_shape(net) {
            return Err(Error::shape("gradient or accumulator shape differs from network"));
        }
        for (layer, w, b) in grads.layers() {
            if w.iter().chain(b).any(|g| !g.is_finite()) {
                return Err(Error::Numeric { layer: Some(layer), msg: "non-finite gradient".into() });
            }
        }
        self.steps += 1;
        let cfg = self.config;
        let lr = self.lr;
        let (weights, biases) = net.weight_bias_mut();
        let params = weights.iter_mut().chain(biases.iter_mut());
        let grad_iter = grads.weights.iter().chain(&grads.biases);
        let first = self.first.weights.iter_mut().chain(self.first.biases.iter_mut());
        let second = self.second.weights.iter_mut().chain(self.second.biases.iter_mut());
        match cfg.kind {
            OptimizerKind::Sgd => {
                for ((p, g), m) in params.zip(grad_iter).zip(first) {
                    for ((p, &g), m) in p.iter_mut().zip(g).zip(m.iter_mut()) {
                        let g = g + cfg.weight_decay * *p;
                        *m = cfg.momentum * *m + g;
                        *p -= lr * *m;
                    }
                }
            }
            OptimizerKind::Adam => {
                let b1 = cfg.momentum;
                let b2 = OptimizerConfig::ADAM_BETA2;
                let t = self.steps as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for (((p, g), m), v) in params.zip(grad_iter).zip(first).zip(second) {
                    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let g = g + cfg.weight_decay * *p;
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + OptimizerConfig::ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}
