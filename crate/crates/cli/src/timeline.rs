//! `timeline`: the mode sequence of one pair as CSV, followed by a `#` summary block.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use switokd::gap::Mode;
use switokd::train::{IterRecord, TimelineSummary};

use crate::error::{CliError, CliResult};
use crate::run::{read_iterations, ITERATIONS};

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub pair: String,
    pub records: Vec<IterRecord>,
    pub summary: TimelineSummary,
}

/// Loads the iteration log of `run_dir` and selects `pair` (optional when the run has one pair).
pub fn cmd_timeline(run_dir: &Path, pair: Option<&str>) -> CliResult<Timeline> {
    let records = read_iterations(&run_dir.join(ITERATIONS))?;
    let pairs: BTreeSet<&str> = records.iter().map(|r| r.pair.as_str()).collect();
    let pair = match (pair, pairs.len()) {
        (Some(p), _) if pairs.contains(p) => p.to_string(),
        (Some(p), _) => {
            return Err(CliError::Validation(format!("pair `{p}` not in log (have: {})", join(&pairs))));
        }
        (None, 0 | 1) => pairs.iter().next().map_or_else(String::new, |p| p.to_string()),
        (None, _) => {
            return Err(CliError::Validation(format!("run has several pairs, pick one with --pair: {}", join(&pairs))));
        }
    };
    let records: Vec<IterRecord> = records.into_iter().filter(|r| r.pair == pair).collect();
    let summary = TimelineSummary::from_modes(records.iter().map(|r| r.mode));
    Ok(Timeline { pair, records, summary })
}

fn join(set: &BTreeSet<&str>) -> String {
    set.iter().copied().collect::<Vec<_>>().join(", ")
}

impl Timeline {
    /// `iteration,mode,G,delta,epsilon` rows, then `# key=value` summary lines.
    pub fn write<W: Write>(&self, out: W) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| CliError::Runtime(e.to_string());
        w.write_record(["iteration", "mode", "G", "delta", "epsilon"]).map_err(err)?;
        for r in &self.records {
            let mode = match r.mode {
                Mode::Learning => "learning",
                Mode::Expert => "expert",
            };
            w.write_record([r.iteration.to_string(), mode.to_string(), r.g.to_string(), r.delta.to_string(), r.epsilon.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut out = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        let s = &self.summary;
        let io = |e: std::io::Error| CliError::Runtime(e.to_string());
        writeln!(out, "# pair={}", self.pair).map_err(io)?;
        writeln!(out, "# iterations={}", s.iterations).map_err(io)?;
        writeln!(out, "# learning={}", s.learning).map_err(io)?;
        writeln!(out, "# expert={}", s.expert).map_err(io)?;
        writeln!(out, "# learning_fraction={}", s.learning_fraction).map_err(io)?;
        writeln!(out, "# expert_fraction={}", s.expert_fraction).map_err(io)?;
        writeln!(out, "# switch_count={}", s.switch_count).map_err(io)?;
        Ok(())
    }
}
