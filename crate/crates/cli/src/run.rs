//! `train`: one run, written to a run directory.
//!
//! ```text
//! <run>/manifest.json      RunManifest, lists every file below including itself
//! <run>/config.txt         effective key = value configuration
//! <run>/iterations.jsonl   one IterRecord per pair per iteration
//! <run>/epochs.csv         epoch,network,role,lr,train_loss,test_accuracy
//! <run>/checkpoints/<network>.ckpt
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use switokd::nn::save_checkpoint;
use switokd::train::{EpochRecord, IterRecord, MetricLog, RunOutput, TrainConfig, Trainer};

use crate::config::{DataSpec, RunConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.txt";
pub const ITERATIONS: &str = "iterations.jsonl";
pub const EPOCHS: &str = "epochs.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config: TrainConfig,
    pub data: DataSpec,
    pub started: String,
    pub finished: String,
    /// `completed` or `aborted`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn read(run_dir: &Path) -> CliResult<Self> {
        let path = run_dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}

/// What a finished `train` call reports back.
#[derive(Debug)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub output: RunOutput,
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() {
        let mut it = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        if it.next().is_some() {
            return Err(CliError::Validation(format!("output directory {} is not empty", dir.display())));
        }
    }
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| CliError::io(dir, e))
}

pub fn write_iterations(path: &Path, records: &[IterRecord]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_epochs(path: &Path, records: &[EpochRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    if records.is_empty() {
        w.write_record(["epoch", "network", "role", "lr", "train_loss", "test_accuracy"])
            .map_err(|e| CliError::io(path, e))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_epochs(path: &Path) -> CliResult<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Validation(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

/// Reads an iteration log; errors name the 1-based line.
pub fn read_iterations(path: &Path) -> CliResult<Vec<IterRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: IterRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Trains `cfg` and writes the run directory. A training abort still leaves a
/// complete run directory (status `aborted`) and returns a runtime error.
pub fn run_train(cfg: &RunConfig, out: &Path) -> CliResult<TrainReport> {
    let (train, test) = cfg.data.load()?;
    prepare_dir(out)?;
    let started = now();
    let mut trainer = Trainer::new(cfg.train.clone(), train, test)?;
    let mut failure = None;
    for _ in 0..cfg.train.epochs {
        if let Err(e) = trainer.train_epoch() {
            failure = Some(e);
            break;
        }
    }
    let output = trainer.finish();

    let mut artifacts = vec![CONFIG_SNAPSHOT.to_string(), ITERATIONS.to_string(), EPOCHS.to_string()];
    fs::write(out.join(CONFIG_SNAPSHOT), cfg.snapshot()).map_err(|e| CliError::io(out, e))?;
    write_iterations(&out.join(ITERATIONS), &output.log.iterations)?;
    write_epochs(&out.join(EPOCHS), &output.log.epochs)?;
    if failure.is_none() {
        for m in &output.members {
            let rel = format!("checkpoints/{}.ckpt", m.name);
            save_checkpoint(&m.net, out.join(&rel))?;
            artifacts.push(rel);
        }
    }
    artifacts.push(MANIFEST.to_string());
    let manifest = RunManifest {
        code_version: format!("switokd {}", env!("CARGO_PKG_VERSION")),
        config: cfg.train.clone(),
        data: cfg.data.clone(),
        started,
        finished: now(),
        status: if failure.is_some() { "aborted" } else { "completed" }.to_string(),
        error: failure.as_ref().map(|e| e.to_string()),
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(out.join(MANIFEST), json + "\n").map_err(|e| CliError::io(out, e))?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(TrainReport { run_dir: out.to_path_buf(), manifest, output }),
    }
}

pub fn cmd_train(config: &Path, overrides: &[String], out: &Path) -> CliResult<TrainReport> {
    let cfg = RunConfig::load(config, overrides)?;
    run_train(&cfg, out)
}

/// Per-network final accuracies, for printing.
pub fn final_accuracies(log: &MetricLog) -> Vec<(String, f64)> {
    let mut names: Vec<&str> = Vec::new();
    for e in &log.epochs {
        if !names.contains(&e.network.as_str()) {
            names.push(&e.network);
        }
    }
    names.into_iter().map(|n| (n.to_string(), log.final_accuracy(n).unwrap_or(0.0))).collect()
}
