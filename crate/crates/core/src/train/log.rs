use serde::{Deserialize, Serialize};

use crate::gap::{GapState, Mode};

/// One JSONL line: the switching state of one pair plus both networks' loss components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub pair: String,
    #[serde(rename = "G")]
    pub g: f64,
    pub r: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
    pub dist_s: f64,
    pub dist_t: f64,
    pub student_ce: f64,
    pub student_kl: f64,
    pub student_loss: f64,
    pub teacher_ce: f64,
    pub teacher_kl: f64,
    pub teacher_loss: f64,
    pub teacher_updated: bool,
}

impl IterRecord {
    pub fn gap_state(&self) -> GapState {
        GapState {
            iteration: self.iteration,
            g: self.g,
            r: self.r,
            epsilon: self.epsilon,
            delta: self.delta,
            mode: self.mode,
            dist_s: self.dist_s,
            dist_t: self.dist_t,
            forced: self.forced,
        }
    }
}

/// One CSV row: a network's state at the end of an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub network: String,
    pub role: String,
    pub lr: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricLog {
    pub iterations: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl MetricLog {
    /// Test accuracy of `network` after each epoch.
    pub fn accuracy_curve(&self, network: &str) -> Vec<f64> {
        self.epochs.iter().filter(|e| e.network == network).map(|e| e.test_accuracy).collect()
    }

    pub fn final_accuracy(&self, network: &str) -> Option<f64> {
        self.accuracy_curve(network).last().copied()
    }

    pub fn pair_records<'a>(&'a self, pair: &'a str) -> impl Iterator<Item = &'a IterRecord> + 'a {
        self.iterations.iter().filter(move |r| r.pair == pair)
    }
}
