use serde::{Deserialize, Serialize};

use crate::gap::{GapState, Mode};

/// Ordered switching record of one teacher-student pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeTimeline {
    entries: Vec<GapState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub iterations: usize,
    pub learning: usize,
    pub expert: usize,
    pub learning_fraction: f64,
    pub expert_fraction: f64,
    pub switch_count: usize,
}

impl TimelineSummary {
    pub fn from_modes<I: IntoIterator<Item = Mode>>(modes: I) -> Self {
        let (mut learning, mut expert, mut switches) = (0, 0, 0);
        let mut prev = None;
        for m in modes {
            match m {
                Mode::Learning => learning += 1,
                Mode::Expert => expert += 1,
            }
            if prev.is_some_and(|p| p != m) {
                switches += 1;
            }
            prev = Some(m);
        }
        let n = learning + expert;
        let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        Self {
            iterations: n,
            learning,
            expert,
            learning_fraction: frac(learning),
            expert_fraction: frac(expert),
            switch_count: switches,
        }
    }
}

impl ModeTimeline {
    pub fn push(&mut self, state: GapState) {
        debug_assert!(self.entries.last().is_none_or(|l| l.iteration < state.iteration));
        self.entries.push(state);
    }

    pub fn entries(&self) -> &[GapState] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn summary(&self) -> TimelineSummary {
        TimelineSummary::from_modes(self.entries.iter().map(|s| s.mode))
    }
}
