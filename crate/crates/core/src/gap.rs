//! Distillation gap, adaptive switching threshold and the mode decision.
//!
//! All distances are plain l1 sums (no `1/K`), so `G` lies in `[0, 2]`.
//! The decision `G <= delta` is invariant to a common rescaling of every
//! norm because `epsilon` only depends on the ratio `r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Teacher and student both update (reciprocal training).
    Learning,
    /// Teacher frozen; only the student updates.
    Expert,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Learning => "learning",
            Mode::Expert => "expert",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learning" => Ok(Mode::Learning),
            "expert" => Ok(Mode::Expert),
            other => Err(Error::Domain(format!("unknown mode `{other}`"))),
        }
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Distillation gap `G = ||p_s^tau - p_t^tau||_1`.
pub fn gap(p_s_tau: &[f64], p_t_tau: &[f64]) -> Result<f64> {
    l1_distance(p_s_tau, p_t_tau)
}

/// `epsilon = exp(-dist_t / (dist_s + dist_t))`.
pub fn epsilon_factor(dist_t: f64, dist_s: f64) -> Result<f64> {
    if !(dist_t >= 0.0 && dist_s >= 0.0) || !dist_t.is_finite() || !dist_s.is_finite() {
        return Err(Error::Domain(format!("distances must be finite and non-negative, got {dist_t}, {dist_s}")));
    }
    let denom = dist_s + dist_t;
    if denom == 0.0 {
        return Err(Error::Degenerate("teacher and student both match the label exactly".into()));
    }
    Ok((-dist_t / denom).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub delta: f64,
    pub epsilon: f64,
    pub r: f64,
    /// `||p_s^tau - y||_1`
    pub dist_s: f64,
    /// `||p_t^tau - y||_1`
    pub dist_t: f64,
}

/// `delta = dist_s - epsilon * dist_t` from precomputed norms.
pub fn threshold_from_norms(dist_s: f64, dist_t: f64) -> Result<Threshold> {
    let epsilon = epsilon_factor(dist_t, dist_s)?;
    let r = dist_t / (dist_s + dist_t);
    Ok(Threshold { delta: dist_s - epsilon * dist_t, epsilon, r, dist_s, dist_t })
}

/// Adaptive switching threshold for one sample.
pub fn threshold(p_s_tau: &[f64], p_t_tau: &[f64], y: &[f64]) -> Result<Threshold> {
    let dist_s = l1_distance(p_s_tau, y)?;
    let dist_t = l1_distance(p_t_tau, y)?;
    threshold_from_norms(dist_s, dist_t)
}

/// Learning iff `G <= delta`; ties go to learning.
pub fn decide_mode(g: f64, delta: f64) -> Mode {
    if g <= delta {
        Mode::Learning
    } else {
        Mode::Expert
    }
}

/// Per-iteration record of the switching decision for one teacher-student pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapState {
    pub iteration: usize,
    #[serde(rename = "G")]
    pub g: f64,
    pub r: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub mode: Mode,
    pub dist_s: f64,
    pub dist_t: f64,
    /// Set when `mode` was imposed by a controller instead of `decide_mode`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
}

/// Softened student/teacher outputs and the label for one sample.
#[derive(Debug, Clone, Copy)]
pub struct GapSample<'a> {
    pub p_s_tau: &'a [f64],
    pub p_t_tau: &'a [f64],
    pub y: &'a [f64],
}

/// Averages per-sample `G` and `delta` over the batch, then decides once.
///
/// A sample where both networks reproduce the label exactly contributes
/// `delta = 0, epsilon = 1, r = 0` (its `G` is then 0 as well).
pub fn batch_gap_state(samples: &[GapSample<'_>], iteration: usize) -> Result<GapState> {
    if samples.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let mut acc = [0.0f64; 6];
    for s in samples {
        let g = gap(s.p_s_tau, s.p_t_tau)?;
        let th = match threshold(s.p_s_tau, s.p_t_tau, s.y) {
            Ok(th) => th,
            Err(Error::Degenerate(_)) => Threshold { delta: 0.0, epsilon: 1.0, r: 0.0, dist_s: 0.0, dist_t: 0.0 },
            Err(e) => return Err(e),
        };
        for (a, v) in acc.iter_mut().zip([g, th.delta, th.epsilon, th.r, th.dist_s, th.dist_t]) {
            *a += v;
        }
    }
    let n = samples.len() as f64;
    let [g, delta, epsilon, r, dist_s, dist_t] = acc.map(|v| v / n);
    Ok(GapState { iteration, g, r, epsilon, delta, mode: decide_mode(g, delta), dist_s, dist_t, forced: false })
}
