//! Probability-space math for distillation: temperature softmax, cross-entropy,
//! KL divergence and the analytic logit gradients of every composite loss.
//!
//! KL terms carry no `1/K` prefactor, so `KL(a, b) = CE(a, b) - H(a)` holds exactly.
//! Every `log` argument is clamped below by [`LOG_FLOOR`].

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-12;

/// Tolerance on `sum(p) = 1` accepted by [`ProbDist::new`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Pre-softmax scores for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitVec(Vec<f64>);

impl LogitVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::shape(format!("logit vector needs at least 2 classes, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { layer: None, msg: "non-finite logit".into() });
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LogitVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A point on the probability simplex, tagged with the temperature that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist {
    probs: Vec<f64>,
    temperature: f64,
}

impl ProbDist {
    pub fn new(probs: Vec<f64>, temperature: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::shape("empty distribution"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs, temperature })
    }

    pub fn one_hot(class: usize, k: usize) -> Result<Self> {
        if class >= k {
            return Err(Error::Domain(format!("class {class} out of range for {k} classes")));
        }
        let mut probs = vec![0.0; k];
        probs[class] = 1.0;
        Ok(Self { probs, temperature: 1.0 })
    }

    pub fn uniform(k: usize) -> Self {
        Self { probs: vec![1.0 / k as f64; k], temperature: 1.0 }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

impl Deref for ProbDist {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.probs
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Temperature softmax `exp(z_k / tau) / sum_j exp(z_j / tau)`.
pub fn soften(logits: &[f64], tau: f64) -> Result<ProbDist> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    if logits.is_empty() {
        return Err(Error::shape("empty logit vector"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| ((z - max) / tau).exp()).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric { layer: None, msg: "non-finite logit".into() });
    }
    Ok(ProbDist { probs, temperature: tau })
}

/// Cross-entropy `-sum_k target_k ln pred_k`.
pub fn ce_loss(target: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(target, pred)?;
    Ok(-target.iter().zip(pred).map(|(&t, &p)| t * p.max(LOG_FLOOR).ln()).sum::<f64>())
}

/// Shannon entropy; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.max(LOG_FLOOR).ln()).sum::<f64>()
}

/// `KL(reference || pred) = sum_k reference_k ln(reference_k / pred_k)`.
pub fn kl_loss(reference: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(reference, pred)?;
    Ok(reference
        .iter()
        .zip(pred)
        .filter(|(&r, _)| r > 0.0)
        .map(|(&r, &p)| r * (r.max(LOG_FLOOR).ln() - p.max(LOG_FLOOR).ln()))
        .sum())
}

/// `hard_weight * (p_1 - y) + soft_coeff * (p_tau - target)`.
///
/// Every logit gradient in this crate has this form; the strategies only
/// differ in the two weights and in what `target` is.
pub fn composite_logit_grad(
    p_1: &[f64],
    y: &[f64],
    hard_weight: f64,
    p_tau: &[f64],
    target: &[f64],
    soft_coeff: f64,
) -> Result<Vec<f64>> {
    same_len(p_1, y)?;
    same_len(p_1, p_tau)?;
    same_len(p_1, target)?;
    Ok((0..p_1.len())
        .map(|k| hard_weight * (p_1[k] - y[k]) + soft_coeff * (p_tau[k] - target[k]))
        .collect())
}

/// Student logit gradient in either mode: `(p_s^1 - y) + alpha * tau * (p_s^tau - teacher)`.
pub fn student_logit_grad(
    teacher: &[f64],
    p_s_1: &[f64],
    p_s_tau: &[f64],
    y: &[f64],
    alpha: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    composite_logit_grad(p_s_1, y, 1.0, p_s_tau, teacher, alpha * tau)
}

/// Reciprocal teacher gradient: `(p_t^1 - y) + beta * tau * (p_t^tau - p_s^tau)`.
pub fn teacher_logit_grad(
    p_t_1: &[f64],
    p_t_tau: &[f64],
    p_s_tau: &[f64],
    y: &[f64],
    beta: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    composite_logit_grad(p_t_1, y, 1.0, p_t_tau, p_s_tau, beta * tau)
}

/// Loss value split into its hard and soft parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub kl: f64,
    pub total: f64,
    pub logit_grad: Vec<f64>,
}

/// `hard_weight * CE(y, p^1) + kl_weight * KL(target, p^tau)` and its logit gradient.
///
/// `kl_weight` multiplies the KL value; the matching gradient coefficient is
/// `kl_weight / tau` because `d KL / d z = (p^tau - target) / tau`.
pub fn composite_loss(
    p_1: &ProbDist,
    y: &[f64],
    hard_weight: f64,
    p_tau: &ProbDist,
    target: &[f64],
    kl_weight: f64,
) -> Result<LossBreakdown> {
    let tau = p_tau.temperature();
    let ce = ce_loss(y, p_1)?;
    let kl = kl_loss(target, p_tau)?;
    let logit_grad = composite_logit_grad(p_1, y, hard_weight, p_tau, target, kl_weight / tau)?;
    Ok(LossBreakdown { ce, kl, total: hard_weight * ce + kl_weight * kl, logit_grad })
}

/// Element-wise mean of two softened predictions, renormalised onto the simplex.
pub fn ensemble_target(p_s_tau: &ProbDist, p_t_tau: &ProbDist) -> Result<ProbDist> {
    same_len(p_s_tau, p_t_tau)?;
    let mut probs: Vec<f64> = p_s_tau.iter().zip(p_t_tau.iter()).map(|(a, b)| 0.5 * (a + b)).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    ProbDist::new(probs, p_s_tau.temperature())
}

/// One point of the degeneration curve for a label-smoothed teacher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegenerationPoint {
    pub lambda: f64,
    pub kl: f64,
    pub ce: f64,
}

impl DegenerationPoint {
    pub fn gap(&self) -> f64 {
        (self.kl - self.ce).abs()
    }
}

/// For teachers `p_t = (1 - lambda) y + lambda * uniform`, evaluates
/// `KL(p_t, p_s)` against `CE(y, p_s)`. As `lambda -> 0` the two coincide.
pub fn degeneration_curve(p_s_tau: &[f64], y: &[f64], lambdas: &[f64]) -> Result<Vec<DegenerationPoint>> {
    same_len(p_s_tau, y)?;
    let k = y.len();
    if y.iter().filter(|&&v| v == 1.0).count() != 1 || y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain("label must be one-hot".into()));
    }
    let ce = ce_loss(y, p_s_tau)?;
    lambdas
        .iter()
        .map(|&lambda| {
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::Domain(format!("lambda {lambda} outside (0, 1]")));
            }
            let teacher: Vec<f64> = y.iter().map(|&v| (1.0 - lambda) * v + lambda / k as f64).collect();
            Ok(DegenerationPoint { lambda, kl: kl_loss(&teacher, p_s_tau)?, ce })
        })
        .collect()
}
