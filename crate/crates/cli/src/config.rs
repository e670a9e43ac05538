//! Run configuration: a flat `key = value` file with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! strategy = switokd
//! topology = pair
//! epochs = 5
//! data.source = blobs
//! data.classes = 4
//! net.teacher.hidden = 64,64
//! opt.student.lr = 0.05
//! ```
//!
//! `net.all.*` and `opt.all.*` apply to every network before the per-network keys.
//! Relative paths are resolved against the working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use switokd::data::{generate_blobs, load_cifar_binary, load_idx, Augment, BlobSpec, Dataset, Split};
use switokd::nn::{OptimizerConfig, OptimizerKind};
use switokd::train::{ConvSpec, LrSchedule, MemberConfig, NetSpec, Role, Strategy, Topology, TrainConfig};

use crate::error::{CliError, CliResult};

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSpec {
    Blobs(BlobSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        classes: Option<usize>,
    },
    Cifar {
        train: PathBuf,
        test: PathBuf,
        classes: usize,
    },
}

impl DataSpec {
    /// Train and test sets, with a shared class count.
    pub fn load(&self) -> CliResult<(Dataset, Dataset)> {
        let (train, test) = match self {
            DataSpec::Blobs(spec) => generate_blobs(spec)?,
            DataSpec::Idx { train_images, train_labels, test_images, test_labels, classes } => {
                let train = load_idx(train_images, train_labels)?;
                let test = load_idx(test_images, test_labels)?.with_split(Split::Test);
                let k = classes.unwrap_or(train.num_classes().max(test.num_classes()));
                (train.with_num_classes(k)?, test.with_num_classes(k)?)
            }
            DataSpec::Cifar { train, test, classes } => {
                (load_cifar_binary(train, *classes)?, load_cifar_binary(test, *classes)?.with_split(Split::Test))
            }
        };
        if train.is_empty() || test.is_empty() {
            return Err(CliError::field("data", "train and test sets must both be non-empty"));
        }
        Ok((train, test))
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataSpec,
    /// The merged key-value entries the config was built from.
    pub entries: BTreeMap<String, String>,
}

/// Parses config text into entries; later duplicates win.
pub fn parse_entries(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = split_pair(line).map_err(|m| CliError::Validation(format!("config line {}: {m}", n + 1)))?;
        out.insert(k, v);
    }
    Ok(out)
}

/// Drops a trailing `# ...` when the `#` follows whitespace.
fn strip_comment(line: &str) -> &str {
    let b = line.as_bytes();
    for i in 1..b.len() {
        if b[i] == b'#' && b[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

fn split_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected `key = value`, got `{s}`"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((k.to_string(), v.to_string()))
}

/// Applies `key=value` overrides on top of `entries`.
pub fn apply_overrides(entries: &mut BTreeMap<String, String>, overrides: &[String]) -> CliResult<()> {
    for o in overrides {
        let (k, v) = split_pair(o).map_err(|m| CliError::Validation(format!("override: {m}")))?;
        entries.insert(k, v);
    }
    Ok(())
}

struct Entries<'a> {
    map: &'a BTreeMap<String, String>,
    used: std::collections::BTreeSet<&'a str>,
}

impl<'a> Entries<'a> {
    fn get(&mut self, key: &str) -> Option<&'a str> {
        let (k, v) = self.map.get_key_value(key)?;
        self.used.insert(k.as_str());
        Some(v.as_str())
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| v.parse::<T>().map_err(|e| CliError::field(key, e))).transpose()
    }

    fn list<T: FromStr>(&mut self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| CliError::field(key, format!("`{s}`: {e}"))))
                    .collect()
            })
            .transpose()
    }
}

/// `<out>x<kernel>` or `<out>x<kernel>s<stride>`, e.g. `8x3s1`.
fn parse_conv(key: &str, s: &str) -> CliResult<ConvSpec> {
    let bad = || CliError::field(key, format!("`{s}` is not <out>x<kernel>[s<stride>]"));
    let (out, rest) = s.split_once('x').ok_or_else(bad)?;
    let (kernel, stride) = rest.split_once('s').unwrap_or((rest, "1"));
    Ok(ConvSpec {
        out_channels: out.trim().parse().map_err(|_| bad())?,
        kernel: kernel.trim().parse().map_err(|_| bad())?,
        stride: stride.trim().parse().map_err(|_| bad())?,
    })
}

fn default_net(role: Role) -> NetSpec {
    match role {
        Role::Teacher => NetSpec::mlp(&[64, 64]),
        Role::Student => NetSpec::mlp(&[16]),
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = parse_entries(&text)?;
        apply_overrides(&mut entries, overrides)?;
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: BTreeMap<String, String>) -> CliResult<Self> {
        let mut e = Entries { map: &entries, used: Default::default() };
        let strategy: Strategy = e.parse("strategy")?.unwrap_or(Strategy::Switokd);
        let topology: Topology = e.parse("topology")?.unwrap_or(Topology::Pair);
        let mut cfg = TrainConfig::pair(strategy, NetSpec::default(), NetSpec::default());
        cfg.topology = topology;
        if let Some(v) = e.parse("alpha")? {
            cfg.alpha = v;
        }
        if let Some(v) = e.parse("beta")? {
            cfg.beta = v;
        }
        if let Some(v) = e.parse("tau")? {
            cfg.tau = v;
        }
        if let Some(v) = e.parse("epochs")? {
            cfg.epochs = v;
        }
        if let Some(v) = e.parse("batch_size")? {
            cfg.batch_size = v;
        }
        if let Some(v) = e.parse("seed")? {
            cfg.seed = v;
        }
        cfg.schedule = LrSchedule {
            milestones: e.list("schedule.milestones")?.unwrap_or_default(),
            gamma: e.parse("schedule.gamma")?.unwrap_or(0.1),
        };
        cfg.augment = e.parse::<Augment>("data.augment")?.unwrap_or_default();
        cfg.kd_teacher_checkpoint = e.get("kd.teacher_checkpoint").map(PathBuf::from);

        cfg.members.clear();
        for &(name, role) in topology.members() {
            let mut net = default_net(role);
            let mut opt = OptimizerConfig::default();
            for scope in ["all", name] {
                let nk = |f: &str| format!("net.{scope}.{f}");
                let ok = |f: &str| format!("opt.{scope}.{f}");
                if let Some(h) = e.list::<usize>(&nk("hidden"))? {
                    net.hidden = h;
                }
                if let Some(c) = e.get(&nk("conv")) {
                    net.conv = c
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_conv(&nk("conv"), s))
                        .collect::<CliResult<_>>()?;
                }
                if let Some(s) = e.parse(&nk("init_seed"))? {
                    net.init_seed = Some(s);
                }
                if let Some(k) = e.parse::<OptimizerKind>(&ok("kind"))? {
                    opt.kind = k;
                }
                if let Some(v) = e.parse(&ok("lr"))? {
                    opt.lr = v;
                }
                if let Some(v) = e.parse(&ok("momentum"))? {
                    opt.momentum = v;
                }
                if let Some(v) = e.parse(&ok("weight_decay"))? {
                    opt.weight_decay = v;
                }
            }
            cfg.members.push(MemberConfig { net, optimizer: opt });
        }

        let source = e.get("data.source").unwrap_or("blobs");
        let data = match source {
            "blobs" => DataSpec::Blobs(BlobSpec {
                classes: e.parse("data.classes")?.unwrap_or(4),
                per_class: e.parse("data.per_class")?.unwrap_or(100),
                dims: e.parse("data.dims")?.unwrap_or(8),
                spread: e.parse("data.spread")?.unwrap_or(0.6),
                seed: e.parse("data.seed")?.unwrap_or(7),
            }),
            "idx" => {
                let mut path = |k: &str| {
                    e.get(k).map(PathBuf::from).ok_or_else(|| CliError::field(k, "required for data.source = idx"))
                };
                let (a, b, c, d) =
                    (path("data.train_images")?, path("data.train_labels")?, path("data.test_images")?, path("data.test_labels")?);
                DataSpec::Idx {
                    train_images: a,
                    train_labels: b,
                    test_images: c,
                    test_labels: d,
                    classes: e.parse("data.classes")?,
                }
            }
            "cifar" => {
                let mut path = |k: &str| {
                    e.get(k).map(PathBuf::from).ok_or_else(|| CliError::field(k, "required for data.source = cifar"))
                };
                let (train, test) = (path("data.train")?, path("data.test")?);
                let classes = e.parse("data.classes")?.unwrap_or(10);
                if classes != 10 && classes != 100 {
                    return Err(CliError::field("data.classes", "CIFAR has 10 or 100 classes"));
                }
                DataSpec::Cifar { train, test, classes }
            }
            other => return Err(CliError::field("data.source", format!("unknown source `{other}` (blobs, idx, cifar)"))),
        };

        let unknown: Vec<&String> = entries.keys().filter(|k| !e.used.contains(k.as_str())).collect();
        if let Some(k) = unknown.first() {
            return Err(CliError::field(k, "unknown key"));
        }
        cfg.validate()?;
        Ok(RunConfig { train: cfg, data, entries })
    }

    /// Canonical text form of the entries, loadable with [`RunConfig::load`].
    pub fn snapshot(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
