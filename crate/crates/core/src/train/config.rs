use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Augment, ImageShape};
use crate::error::{Error, Result};
use crate::nn::{mlp_layers, Activation, LayerSpec, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Cross-entropy only, networks trained independently.
    Vanilla,
    /// Student distils from a frozen, pre-trained teacher.
    KdOffline,
    /// Deep mutual learning: symmetric two-way KL.
    Dml,
    /// Both networks distil from the ensemble of their softened outputs.
    Kdcl,
    /// Switchable online distillation.
    Switokd,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Vanilla, Strategy::KdOffline, Strategy::Dml, Strategy::Kdcl, Strategy::Switokd];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::KdOffline => "kd-offline",
            Strategy::Dml => "dml",
            Strategy::Kdcl => "kdcl",
            Strategy::Switokd => "switokd",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy `{s}`")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Pair,
    OneTeacherTwoStudents,
    TwoTeachersOneStudent,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Pair => "pair",
            Topology::OneTeacherTwoStudents => "one-teacher-two-students",
            Topology::TwoTeachersOneStudent => "two-teachers-one-student",
        }
    }

    /// Network names and roles, in member order.
    pub fn members(self) -> &'static [(&'static str, Role)] {
        match self {
            Topology::Pair => &[("teacher", Role::Teacher), ("student", Role::Student)],
            Topology::OneTeacherTwoStudents => {
                &[("teacher", Role::Teacher), ("student1", Role::Student), ("student2", Role::Student)]
            }
            Topology::TwoTeachersOneStudent => {
                &[("teacher1", Role::Teacher), ("teacher2", Role::Teacher), ("student", Role::Student)]
            }
        }
    }

    /// Teacher-student pairs governed by the switching rule, as member indices.
    pub fn pairs(self) -> &'static [(usize, usize)] {
        match self {
            Topology::Pair => &[(0, 1)],
            Topology::OneTeacherTwoStudents => &[(0, 1), (0, 2)],
            Topology::TwoTeachersOneStudent => &[(0, 2), (1, 2)],
        }
    }

    /// Same-role pairs that exchange plain two-way KL every iteration.
    pub fn peers(self) -> &'static [(usize, usize)] {
        match self {
            Topology::Pair => &[],
            Topology::OneTeacherTwoStudents => &[(1, 2)],
            Topology::TwoTeachersOneStudent => &[(0, 1)],
        }
    }
}

impl FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(Topology::Pair),
            "one-teacher-two-students" | "1t2s" => Ok(Topology::OneTeacherTwoStudents),
            "two-teachers-one-student" | "2t1s" => Ok(Topology::TwoTeachersOneStudent),
            other => Err(Error::config("topology", format!("unknown topology `{other}`"))),
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Architecture knobs: an optional convolution stack followed by rectifier dense layers.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NetSpec {
    pub conv: Vec<ConvSpec>,
    pub hidden: Vec<usize>,
    /// Overrides the per-network seed derived from the run seed.
    pub init_seed: Option<u64>,
}

impl NetSpec {
    pub fn mlp(hidden: &[usize]) -> Self {
        Self { conv: Vec::new(), hidden: hidden.to_vec(), init_seed: None }
    }

    pub fn layers(&self, input_dim: usize, image: Option<ImageShape>, classes: usize) -> Result<Vec<LayerSpec>> {
        let mut layers = Vec::new();
        let mut flat = input_dim;
        if !self.conv.is_empty() {
            let Some(mut shape) = image else {
                return Err(Error::config("net.conv", "convolution layers need image-shaped data"));
            };
            for c in &self.conv {
                let layer = LayerSpec::Conv2d {
                    in_channels: shape.channels,
                    in_height: shape.height,
                    in_width: shape.width,
                    out_channels: c.out_channels,
                    kernel: c.kernel,
                    stride: c.stride,
                    activation: Activation::Relu,
                };
                if c.kernel == 0 || c.stride == 0 || c.kernel > shape.height || c.kernel > shape.width {
                    return Err(Error::config("net.conv", "kernel must fit the feature map; stride must be > 0"));
                }
                shape = ImageShape {
                    channels: c.out_channels,
                    height: (shape.height - c.kernel) / c.stride + 1,
                    width: (shape.width - c.kernel) / c.stride + 1,
                };
                layers.push(layer);
            }
            flat = shape.len();
        }
        layers.extend(mlp_layers(flat, &self.hidden, classes));
        Ok(layers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberConfig {
    pub net: NetSpec,
    pub optimizer: OptimizerConfig,
}

/// Step decay: the learning rate is multiplied by `gamma` at each milestone epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub milestones: Vec<usize>,
    pub gamma: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { milestones: Vec::new(), gamma: 0.1 }
    }
}

impl LrSchedule {
    pub fn factor(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.gamma.powi(drops as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub strategy: Strategy,
    pub topology: Topology,
    pub seed: u64,
    /// One entry per network, in [`Topology::members`] order.
    pub members: Vec<MemberConfig>,
    pub schedule: LrSchedule,
    pub augment: Augment,
    /// Pre-trained teacher for `kd-offline`.
    pub kd_teacher_checkpoint: Option<PathBuf>,
}

impl TrainConfig {
    /// Two-network configuration with the default hyperparameters (`alpha = beta = tau = 1`).
    pub fn pair(strategy: Strategy, teacher: NetSpec, student: NetSpec) -> Self {
        let opt = OptimizerConfig::default();
        Self {
            alpha: 1.0,
            beta: 1.0,
            tau: 1.0,
            epochs: 10,
            batch_size: 64,
            strategy,
            topology: Topology::Pair,
            seed: 0,
            members: vec![
                MemberConfig { net: teacher, optimizer: opt },
                MemberConfig { net: student, optimizer: opt },
            ],
            schedule: LrSchedule::default(),
            augment: Augment::None,
            kd_teacher_checkpoint: None,
        }
    }

    pub fn member_names(&self) -> Vec<&'static str> {
        self.topology.members().iter().map(|(n, _)| *n).collect()
    }

    /// Field-level validation; returns the first violated constraint.
    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64, f: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(f, format!("must be a finite non-negative number, got {v}")))
            }
        };
        nonneg(self.alpha, "alpha")?;
        nonneg(self.beta, "beta")?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", format!("must be positive, got {}", self.tau)));
        }
        if self.strategy == Strategy::KdOffline && self.alpha > 1.0 {
            return Err(Error::config("alpha", "kd-offline weights CE by alpha and KL by 1 - alpha; need alpha <= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.topology != Topology::Pair && self.strategy != Strategy::Switokd {
            return Err(Error::config(
                "topology",
                format!("{} requires strategy switokd, got {}", self.topology, self.strategy),
            ));
        }
        let expected = self.topology.members().len();
        if self.members.len() != expected {
            return Err(Error::config(
                "members",
                format!("{} needs {expected} networks, got {}", self.topology, self.members.len()),
            ));
        }
        for (m, (name, _)) in self.members.iter().zip(self.topology.members()) {
            m.optimizer.validate(&format!("opt.{name}"))?;
            if m.net.hidden.contains(&0) {
                return Err(Error::config(format!("net.{name}.hidden"), "layer widths must be > 0"));
            }
        }
        if !(self.schedule.gamma > 0.0 && self.schedule.gamma.is_finite()) {
            return Err(Error::config("schedule.gamma", "must be positive"));
        }
        if self.strategy == Strategy::KdOffline && self.kd_teacher_checkpoint.is_none() {
            return Err(Error::config("kd.teacher_checkpoint", "kd-offline needs a pre-trained teacher checkpoint"));
        }
        Ok(())
    }
}
