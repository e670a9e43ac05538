//! `compare`: side-by-side final/best accuracy and switching statistics.
//!
//! Output columns: `source,strategy,topology,network,role,final_accuracy,best_accuracy,switch_count,expert_fraction`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use switokd::gap::Mode;
use switokd::train::{EpochRecord, IterRecord, TimelineSummary, Topology, TrainConfig, Trainer};

use crate::config::{DataSpec, RunConfig};
use crate::error::{CliError, CliResult};
use crate::run::{read_epochs, read_iterations, RunManifest, EPOCHS, ITERATIONS, MANIFEST};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub source: String,
    pub strategy: String,
    pub topology: String,
    pub network: String,
    pub role: String,
    pub final_accuracy: f64,
    pub best_accuracy: f64,
    pub switch_count: usize,
    pub expert_fraction: f64,
}

/// One run's logs plus the config that produced them.
pub struct RunLogs {
    pub source: String,
    pub config: TrainConfig,
    pub data: DataSpec,
    pub epochs: Vec<EpochRecord>,
    pub iterations: Vec<IterRecord>,
}

impl RunLogs {
    /// Reads a finished run directory.
    pub fn from_run_dir(dir: &Path) -> CliResult<Self> {
        let manifest = RunManifest::read(dir)?;
        Ok(RunLogs {
            source: dir.display().to_string(),
            config: manifest.config,
            data: manifest.data,
            epochs: read_epochs(&dir.join(EPOCHS))?,
            iterations: read_iterations(&dir.join(ITERATIONS))?,
        })
    }

    /// Trains a config in memory.
    pub fn from_config(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let cfg = RunConfig::load(path, overrides)?;
        let (train, test) = cfg.data.load()?;
        let out = Trainer::new(cfg.train.clone(), train, test)?.run()?;
        Ok(RunLogs {
            source: path.display().to_string(),
            config: cfg.train,
            data: cfg.data,
            epochs: out.log.epochs,
            iterations: out.log.iterations,
        })
    }
}

/// Pair names in the order the trainer logs them.
pub fn pair_names(topology: Topology) -> Vec<String> {
    let m = topology.members();
    topology.pairs().iter().map(|&(t, s)| format!("{}-{}", m[t].0, m[s].0)).collect()
}

/// Per-iteration mode of one network: expert only when every pair it belongs to is in expert mode.
pub fn network_modes(topology: Topology, network: &str, iterations: &[IterRecord]) -> Vec<Mode> {
    let m = topology.members();
    let mine: Vec<String> = topology
        .pairs()
        .iter()
        .filter(|&&(t, s)| m[t].0 == network || m[s].0 == network)
        .map(|&(t, s)| format!("{}-{}", m[t].0, m[s].0))
        .collect();
    let mut by_iter: BTreeMap<usize, bool> = BTreeMap::new();
    for r in iterations.iter().filter(|r| mine.contains(&r.pair)) {
        let all_expert = by_iter.entry(r.iteration).or_insert(true);
        *all_expert &= r.mode == Mode::Expert;
    }
    by_iter.into_values().map(|e| if e { Mode::Expert } else { Mode::Learning }).collect()
}

pub fn rows_for(run: &RunLogs) -> Vec<CompareRow> {
    let topology = run.config.topology;
    topology
        .members()
        .iter()
        .map(|&(name, role)| {
            let acc: Vec<f64> = run.epochs.iter().filter(|e| e.network == name).map(|e| e.test_accuracy).collect();
            let summary = TimelineSummary::from_modes(network_modes(topology, name, &run.iterations));
            CompareRow {
                source: run.source.clone(),
                strategy: run.config.strategy.to_string(),
                topology: topology.to_string(),
                network: name.to_string(),
                role: role.as_str().to_string(),
                final_accuracy: acc.last().copied().unwrap_or(f64::NAN),
                best_accuracy: acc.iter().copied().fold(f64::NAN, f64::max),
                switch_count: summary.switch_count,
                expert_fraction: summary.expert_fraction,
            }
        })
        .collect()
}

/// Runs or reads every input (a run directory holding a manifest, or a config file).
pub fn cmd_compare(inputs: &[PathBuf], overrides: &[String], allow_mismatch: bool) -> CliResult<Vec<CompareRow>> {
    if inputs.is_empty() {
        return Err(CliError::Validation("compare needs at least one config or run directory".into()));
    }
    let mut runs = Vec::with_capacity(inputs.len());
    for p in inputs {
        let run = if p.join(MANIFEST).is_file() {
            RunLogs::from_run_dir(p)?
        } else {
            RunLogs::from_config(p, overrides)?
        };
        runs.push(run);
    }
    if !allow_mismatch {
        let first = &runs[0];
        for r in &runs[1..] {
            if r.data != first.data {
                return Err(CliError::field("data", format!("{} and {} use different datasets", first.source, r.source)));
            }
            if r.config.seed != first.config.seed {
                return Err(CliError::field("seed", format!("{} and {} use different seeds", first.source, r.source)));
            }
        }
    }
    Ok(runs.iter().flat_map(rows_for).collect())
}

pub fn write_rows<W: Write>(rows: &[CompareRow], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}
