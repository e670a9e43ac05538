//! Training loops: switchable online distillation for pairs and three-network
//! topologies, plus the vanilla / KD / DML / KDCL baselines.
//!
//! Every strategy runs through [`Trainer::step`]: forward all networks on the
//! shared batch, compute one [`GapState`] per teacher-student pair, pick each
//! network's loss terms, then backpropagate and update the networks that are
//! not frozen this iteration.

mod config;
mod log;
mod timeline;

pub use config::{ConvSpec, LrSchedule, MemberConfig, NetSpec, Role, Strategy, Topology, TrainConfig};
pub use log::{EpochRecord, IterRecord, MetricLog};
pub use timeline::{ModeTimeline, TimelineSummary};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{batches, Augment, Batch, Dataset};
use crate::distill::{ce_loss, composite_logit_grad, ensemble_target, kl_loss, soften, ProbDist};
use crate::error::{Error, Result};
use crate::gap::{batch_gap_state, GapSample, GapState, Mode};
use crate::nn::{load_checkpoint, NetworkParams, OptimizerState};
use crate::tensor::Matrix;

/// One network taking part in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub name: String,
    pub role: Role,
    pub net: NetworkParams,
    pub opt: OptimizerState,
    base_lr: f64,
    /// Never updated (the pre-trained teacher of `kd-offline`).
    pinned: bool,
}

/// A teacher-student pair under the switching rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLink {
    pub name: String,
    pub teacher: usize,
    pub student: usize,
    pub timeline: ModeTimeline,
}

/// `(pair index, iteration, decided state) -> mode`.
pub type ModeFn = Box<dyn FnMut(usize, usize, &GapState) -> Mode + Send>;

/// Chooses the mode actually applied to a pair; the default follows `G <= delta`.
pub enum ModeController {
    Adaptive,
    Fixed(Mode),
    /// Cycles `learning` iterations of learning mode, then `expert` of expert mode.
    Alternate { learning: usize, expert: usize },
    Custom(ModeFn),
}

impl ModeController {
    fn choose(&mut self, pair: usize, state: &GapState) -> Mode {
        match self {
            ModeController::Adaptive => state.mode,
            ModeController::Fixed(m) => *m,
            ModeController::Alternate { learning, expert } => {
                let period = (*learning + *expert).max(1);
                if state.iteration % period < *learning {
                    Mode::Learning
                } else {
                    Mode::Expert
                }
            }
            ModeController::Custom(f) => f(pair, state.iteration, state),
        }
    }
}

/// A KL term in one network's loss.
#[derive(Debug, Clone, PartialEq)]
pub struct KlTerm {
    /// Network (or `"ensemble"`) whose softened output is the target.
    pub source: String,
    /// Multiplies the KL value in the loss.
    pub loss_weight: f64,
    /// Multiplies `p^tau - target` in the logit gradient.
    pub grad_coeff: f64,
}

/// What happened to one network during a step.
#[derive(Debug, Clone, PartialEq)]
pub struct NetUpdate {
    pub name: String,
    pub updated: bool,
    pub hard_weight: f64,
    pub kl_terms: Vec<KlTerm>,
    /// Batch means.
    pub ce: f64,
    pub kl: f64,
    pub total: f64,
    /// Per-sample logit gradients applied (zeros when not updated).
    pub logit_grads: Matrix,
}

/// Instrumentation for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub iteration: usize,
    /// One per pair, with the applied mode.
    pub pair_states: Vec<GapState>,
    pub updates: Vec<NetUpdate>,
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub members: Vec<Member>,
    pub pairs: Vec<PairLink>,
    pub log: MetricLog,
}

impl RunOutput {
    pub fn member(&self, name: &str) -> Option<&Member> {
        self.members.iter().find(|m| m.name == name)
    }
}

fn member_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

struct Target<'a> {
    term: KlTerm,
    dists: Vec<&'a [f64]>,
}

pub struct Trainer {
    cfg: TrainConfig,
    train: Dataset,
    test: Dataset,
    members: Vec<Member>,
    pairs: Vec<PairLink>,
    controller: ModeController,
    iteration: usize,
    epoch: usize,
    log: MetricLog,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, train: Dataset, test: Dataset) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::Domain("training set is empty".into()));
        }
        if train.num_classes() != test.num_classes() || train.dims() != test.dims() {
            return Err(Error::config("data", "train and test sets disagree on classes or dims"));
        }
        let classes = train.num_classes();
        let mut members = Vec::with_capacity(cfg.members.len());
        for (i, (mc, &(name, role))) in cfg.members.iter().zip(cfg.topology.members()).enumerate() {
            let layers = mc.net.layers(train.dims(), train.image_shape(), classes)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mc.net.init_seed.unwrap_or_else(|| member_seed(cfg.seed, i)));
            let mut net = NetworkParams::init(layers, &mut rng)?;
            let mut pinned = false;
            if cfg.strategy == Strategy::KdOffline && role == Role::Teacher {
                let path = cfg.kd_teacher_checkpoint.as_ref().expect("validated");
                net = load_checkpoint(path).map_err(|e| {
                    Error::config("kd.teacher_checkpoint", format!("{}: {e}", path.display()))
                })?;
                if net.input_dim() != train.dims() || net.output_dim() != classes {
                    return Err(Error::config("kd.teacher_checkpoint", "checkpoint architecture does not match data"));
                }
                pinned = true;
            }
            let opt = OptimizerState::new(mc.optimizer, &net);
            members.push(Member { name: name.to_string(), role, net, opt, base_lr: mc.optimizer.lr, pinned });
        }
        let pairs = cfg
            .topology
            .pairs()
            .iter()
            .map(|&(t, s)| PairLink {
                name: format!("{}-{}", members[t].name, members[s].name),
                teacher: t,
                student: s,
                timeline: ModeTimeline::default(),
            })
            .collect();
        Ok(Self {
            cfg,
            train,
            test,
            members,
            pairs,
            controller: ModeController::Adaptive,
            iteration: 0,
            epoch: 0,
            log: MetricLog::default(),
        })
    }

    /// Replaces the mode controller (only consulted by `switokd`).
    pub fn with_controller(mut self, controller: ModeController) -> Self {
        self.controller = controller;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn member(&self, name: &str) -> Option<&Member> {
        self.members.iter().find(|m| m.name == name)
    }

    /// Mutable access to a network, for constructed scenarios.
    pub fn net_mut(&mut self, index: usize) -> &mut NetworkParams {
        &mut self.members[index].net
    }

    pub fn pairs(&self) -> &[PairLink] {
        &self.pairs
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn log(&self) -> &MetricLog {
        &self.log
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    /// Runs one optimisation step on `batch`.
    pub fn step(&mut self, batch: &Batch) -> Result<StepTrace> {
        let iteration = self.iteration;
        let n = batch.len();
        if n == 0 {
            return Err(Error::Domain("empty batch".into()));
        }
        let k = self.train.num_classes();
        let tau = self.cfg.tau;
        let abort = |e: Error| Error::Aborted { iteration, msg: e.to_string() };

        let ys: Vec<ProbDist> =
            batch.labels.iter().map(|&l| ProbDist::one_hot(l, k)).collect::<Result<_>>()?;
        let mut p1: Vec<Vec<ProbDist>> = Vec::with_capacity(self.members.len());
        let mut ptau: Vec<Vec<ProbDist>> = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let z = m.net.forward(&batch.features)?;
            let soft1 = z.iter_rows().map(|r| soften(r, 1.0)).collect::<Result<Vec<_>>>().map_err(abort)?;
            let softt = z.iter_rows().map(|r| soften(r, tau)).collect::<Result<Vec<_>>>().map_err(abort)?;
            p1.push(soft1);
            ptau.push(softt);
        }

        let mut states = Vec::with_capacity(self.pairs.len());
        for (pi, pair) in self.pairs.iter().enumerate() {
            let samples: Vec<GapSample> = (0..n)
                .map(|i| GapSample { p_s_tau: &ptau[pair.student][i], p_t_tau: &ptau[pair.teacher][i], y: &ys[i] })
                .collect();
            let mut st = batch_gap_state(&samples, iteration).map_err(abort)?;
            if self.cfg.strategy == Strategy::Switokd {
                let applied = self.controller.choose(pi, &st);
                if applied != st.mode {
                    st.mode = applied;
                    st.forced = true;
                }
            } else {
                st.forced = st.mode != Mode::Learning;
                st.mode = Mode::Learning;
            }
            states.push(st);
        }

        let ensemble: Vec<ProbDist> = if self.cfg.strategy == Strategy::Kdcl {
            (0..n).map(|i| ensemble_target(&ptau[1][i], &ptau[0][i])).collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        let mut updates = Vec::with_capacity(self.members.len());
        for mi in 0..self.members.len() {
            let (updated, hard, targets) = self.loss_terms(mi, &states, &ptau, &ensemble);
            let mut grads = Matrix::zeros(n, k);
            let (mut ce_sum, mut kl_sum, mut total_sum) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let ce = ce_loss(&ys[i], &p1[mi][i])?;
                let mut kl_total = 0.0;
                let mut weighted = 0.0;
                for t in &targets {
                    let kl = kl_loss(t.dists[i], &ptau[mi][i])?;
                    kl_total += kl;
                    weighted += t.term.loss_weight * kl;
                }
                ce_sum += ce;
                kl_sum += kl_total;
                total_sum += hard * ce + weighted;
                if updated {
                    let row = logit_grad(&p1[mi][i], &ys[i], hard, &ptau[mi][i], &targets, i)?;
                    grads.row_mut(i).copy_from_slice(&row);
                }
            }
            let nf = n as f64;
            let (ce, kl, total) = (ce_sum / nf, kl_sum / nf, total_sum / nf);
            if !total.is_finite() {
                return Err(Error::Aborted {
                    iteration,
                    msg: format!("non-finite loss for {}", self.members[mi].name),
                });
            }
            updates.push(NetUpdate {
                name: self.members[mi].name.clone(),
                updated,
                hard_weight: hard,
                kl_terms: targets.into_iter().map(|t| t.term).collect(),
                ce,
                kl,
                total,
                logit_grads: grads,
            });
        }

        for (m, u) in self.members.iter_mut().zip(&updates) {
            if !u.updated {
                continue;
            }
            let g = m.net.backward(&batch.features, &u.logit_grads)?;
            m.opt.step(&mut m.net, &g).map_err(abort)?;
        }

        for (pair, st) in self.pairs.iter_mut().zip(&states) {
            let (t, s) = (&updates[pair.teacher], &updates[pair.student]);
            self.log.iterations.push(IterRecord {
                iteration,
                epoch: self.epoch,
                pair: pair.name.clone(),
                g: st.g,
                r: st.r,
                epsilon: st.epsilon,
                delta: st.delta,
                mode: st.mode,
                forced: st.forced,
                dist_s: st.dist_s,
                dist_t: st.dist_t,
                student_ce: s.ce,
                student_kl: s.kl,
                student_loss: s.total,
                teacher_ce: t.ce,
                teacher_kl: t.kl,
                teacher_loss: t.total,
                teacher_updated: t.updated,
            });
            pair.timeline.push(st.clone());
        }
        self.iteration += 1;
        Ok(StepTrace { iteration, pair_states: states, updates })
    }

    /// `(updated, CE weight, KL targets)` for member `mi` this iteration.
    fn loss_terms<'a>(
        &self,
        mi: usize,
        states: &[GapState],
        ptau: &'a [Vec<ProbDist>],
        ensemble: &'a [ProbDist],
    ) -> (bool, f64, Vec<Target<'a>>) {
        let cfg = &self.cfg;
        let tau = cfg.tau;
        let me = &self.members[mi];
        let dists = |j: usize| -> Vec<&'a [f64]> { ptau[j].iter().map(|p| &p[..]).collect() };
        let term = |source: &str, loss_weight: f64, grad_coeff: f64| KlTerm {
            source: source.to_string(),
            loss_weight,
            grad_coeff,
        };
        let other = 1 - mi.min(1);
        match cfg.strategy {
            Strategy::Vanilla => (true, 1.0, Vec::new()),
            Strategy::KdOffline => match me.role {
                Role::Teacher => (!me.pinned, 1.0, Vec::new()),
                Role::Student => (
                    true,
                    cfg.alpha,
                    vec![Target {
                        term: term(&self.members[0].name, (1.0 - cfg.alpha) * tau * tau, (1.0 - cfg.alpha) * tau),
                        dists: dists(0),
                    }],
                ),
            },
            Strategy::Dml => (
                true,
                1.0,
                vec![Target { term: term(&self.members[other].name, 1.0, 1.0 / tau), dists: dists(other) }],
            ),
            Strategy::Kdcl => (
                true,
                1.0,
                vec![Target {
                    term: term("ensemble", tau * tau, tau),
                    dists: ensemble.iter().map(|p| &p[..]).collect(),
                }],
            ),
            Strategy::Switokd => {
                let mut targets = Vec::new();
                let updated = match me.role {
                    Role::Student => {
                        for (pair, _) in self.pairs.iter().zip(states).filter(|(p, _)| p.student == mi) {
                            let t = &self.members[pair.teacher].name;
                            targets.push(Target {
                                term: term(t, cfg.alpha * tau * tau, cfg.alpha * tau),
                                dists: dists(pair.teacher),
                            });
                        }
                        true
                    }
                    Role::Teacher => {
                        // frozen unless at least one of its pairs is in learning mode
                        for (pair, _) in self
                            .pairs
                            .iter()
                            .zip(states)
                            .filter(|(p, st)| p.teacher == mi && st.mode == Mode::Learning)
                        {
                            let s = &self.members[pair.student].name;
                            targets.push(Target {
                                term: term(s, cfg.beta * tau * tau, cfg.beta * tau),
                                dists: dists(pair.student),
                            });
                        }
                        !targets.is_empty()
                    }
                };
                if updated {
                    for &(a, b) in cfg.topology.peers() {
                        let peer = if a == mi {
                            b
                        } else if b == mi {
                            a
                        } else {
                            continue;
                        };
                        targets.push(Target { term: term(&self.members[peer].name, tau * tau, tau), dists: dists(peer) });
                    }
                }
                (updated, 1.0, targets)
            }
        }
    }

    /// Runs one epoch over the training set and evaluates every network on the test set.
    pub fn train_epoch(&mut self) -> Result<Vec<EpochRecord>> {
        let epoch = self.epoch;
        let factor = self.cfg.schedule.factor(epoch);
        for m in &mut self.members {
            m.opt.set_lr(m.base_lr * factor);
        }
        let mut aug_rng = ChaCha8Rng::seed_from_u64(crate::data::shuffle_seed(self.cfg.seed ^ 0xA5A5, epoch));
        let epoch_batches: Vec<Batch> = batches(&self.train, self.cfg.batch_size, self.cfg.seed, epoch).collect();
        let mut loss_sums = vec![0.0; self.members.len()];
        for mut b in epoch_batches {
            if let (aug, Some(shape)) = (self.cfg.augment, self.train.image_shape()) {
                if aug != Augment::None {
                    aug.apply(&mut b.features, shape, &mut aug_rng);
                }
            }
            let trace = self.step(&b)?;
            for (s, u) in loss_sums.iter_mut().zip(&trace.updates) {
                *s += u.total * b.len() as f64;
            }
        }
        let mut records = Vec::with_capacity(self.members.len());
        for (m, loss) in self.members.iter().zip(loss_sums) {
            records.push(EpochRecord {
                epoch,
                network: m.name.clone(),
                role: m.role.as_str().to_string(),
                lr: m.opt.lr(),
                train_loss: loss / self.train.len() as f64,
                test_accuracy: evaluate(&m.net, &self.test)?,
            });
        }
        self.log.epochs.extend(records.iter().cloned());
        self.epoch += 1;
        Ok(records)
    }

    /// Trains for the configured number of epochs.
    pub fn run(mut self) -> Result<RunOutput> {
        while self.epoch < self.cfg.epochs {
            self.train_epoch()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> RunOutput {
        RunOutput { members: self.members, pairs: self.pairs, log: self.log }
    }
}

/// Logit gradient for one sample: `hard (p^1 - y) + sum_j c_j (p^tau - t_j)`.
fn logit_grad(p1: &[f64], y: &[f64], hard: f64, ptau: &[f64], targets: &[Target<'_>], i: usize) -> Result<Vec<f64>> {
    let Some((first, rest)) = targets.split_first() else {
        return composite_logit_grad(p1, y, hard, ptau, ptau, 0.0);
    };
    let mut g = composite_logit_grad(p1, y, hard, ptau, first.dists[i], first.term.grad_coeff)?;
    for t in rest {
        for (k, v) in g.iter_mut().enumerate() {
            *v += t.term.grad_coeff * (ptau[k] - t.dists[i][k]);
        }
    }
    Ok(g)
}

/// Top-1 accuracy under the argmax of the temperature-1 softmax.
pub fn evaluate(net: &NetworkParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    let z = net.forward(data.features())?;
    let mut correct = 0usize;
    for (row, &label) in z.iter_rows().zip(data.labels()) {
        if soften(row, 1.0)?.argmax() == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Two-network switchable online distillation with the adaptive threshold.
pub fn train_switokd_pair(cfg: TrainConfig, train: Dataset, test: Dataset) -> Result<RunOutput> {
    if cfg.strategy != Strategy::Switokd || cfg.topology != Topology::Pair {
        return Err(Error::config("strategy", "train_switokd_pair needs strategy switokd and topology pair"));
    }
    Trainer::new(cfg, train, test)?.run()
}

pub fn train_baseline(cfg: TrainConfig, train: Dataset, test: Dataset) -> Result<RunOutput> {
    if cfg.strategy == Strategy::Switokd {
        return Err(Error::config("strategy", "switokd is not a baseline"));
    }
    Trainer::new(cfg, train, test)?.run()
}

pub fn train_multi(cfg: TrainConfig, train: Dataset, test: Dataset) -> Result<RunOutput> {
    if cfg.topology == Topology::Pair {
        return Err(Error::config("topology", "train_multi needs a three-network topology"));
    }
    Trainer::new(cfg, train, test)?.run()
}

/// Dispatches on strategy and topology.
pub fn train(cfg: TrainConfig, train: Dataset, test: Dataset) -> Result<RunOutput> {
    Trainer::new(cfg, train, test)?.run()
}
