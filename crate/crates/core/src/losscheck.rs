//! Finite-difference check of every strategy's per-sample loss against its
//! analytic logit gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distill::{ce_loss, composite_logit_grad, ensemble_target, kl_loss, soften, ProbDist};
use crate::error::Result;
use crate::nn::FD_STEP;
use crate::train::Strategy;

/// A per-network loss form, as a function of that network's logits `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossForm {
    /// `CE(y, p^1)`
    Vanilla,
    /// `alpha CE(y, p_s^1) + (1 - alpha) tau^2 KL(p_t^tau, p_s^tau)`
    KdStudent,
    /// `CE(y, p^1) + KL(p_other^tau, p^tau)`, each side of the mutual pair
    DmlMember,
    /// `CE(y, p^1) + tau^2 KL(p_m, p^tau)` with the ensemble `p_m` held fixed
    KdclMember,
    /// `CE(y, p_s^1) + alpha tau^2 KL(p_t^tau, p_s^tau)`, learning and expert mode alike
    SwitokdStudent,
    /// `CE(y, p_t^1) + beta tau^2 KL(p_s^tau, p_t^tau)`
    SwitokdTeacher,
}

impl LossForm {
    pub const ALL: [LossForm; 6] = [
        LossForm::Vanilla,
        LossForm::KdStudent,
        LossForm::DmlMember,
        LossForm::KdclMember,
        LossForm::SwitokdStudent,
        LossForm::SwitokdTeacher,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossForm::Vanilla => "vanilla",
            LossForm::KdStudent => "kd-student",
            LossForm::DmlMember => "dml-member",
            LossForm::KdclMember => "kdcl-member",
            LossForm::SwitokdStudent => "switokd-student",
            LossForm::SwitokdTeacher => "switokd-teacher",
        }
    }

    pub fn for_strategy(strategy: Strategy) -> &'static [LossForm] {
        match strategy {
            Strategy::Vanilla => &[LossForm::Vanilla],
            Strategy::KdOffline => &[LossForm::KdStudent],
            Strategy::Dml => &[LossForm::DmlMember],
            Strategy::Kdcl => &[LossForm::KdclMember],
            Strategy::Switokd => &[LossForm::SwitokdStudent, LossForm::SwitokdTeacher],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyper {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

/// One random case: this network's logits, the other network's logits, a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub z: Vec<f64>,
    pub other: Vec<f64>,
    pub label: usize,
}

impl Instance {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_classes: usize) -> Self {
        let k = rng.random_range(2..=max_classes.max(2));
        let mut logits = |scale: f64| (0..k).map(|_| rng.random_range(-scale..scale)).collect::<Vec<_>>();
        let z = logits(4.0);
        let other = logits(4.0);
        Instance { z, other, label: rng.random_range(0..k) }
    }
}

/// `(hard weight, KL weight, target)` of the form; the target does not depend on `z`.
fn parts(form: LossForm, inst: &Instance, h: Hyper) -> Result<(f64, f64, ProbDist)> {
    let other = soften(&inst.other, h.tau)?;
    let t2 = h.tau * h.tau;
    Ok(match form {
        LossForm::Vanilla => (1.0, 0.0, other),
        LossForm::KdStudent => (h.alpha, (1.0 - h.alpha) * t2, other),
        LossForm::DmlMember => (1.0, 1.0, other),
        LossForm::KdclMember => (1.0, t2, ensemble_target(&soften(&inst.z, h.tau)?, &other)?),
        LossForm::SwitokdStudent => (1.0, h.alpha * t2, other),
        LossForm::SwitokdTeacher => (1.0, h.beta * t2, other),
    })
}

fn one_hot(label: usize, k: usize) -> Vec<f64> {
    (0..k).map(|i| if i == label { 1.0 } else { 0.0 }).collect()
}

/// Loss value at logits `z`, with the target taken from `inst`.
pub fn loss_at(form: LossForm, inst: &Instance, h: Hyper, z: &[f64]) -> Result<f64> {
    let (hard, kl_w, target) = parts(form, inst, h)?;
    let y = one_hot(inst.label, z.len());
    Ok(hard * ce_loss(&y, &soften(z, 1.0)?)? + kl_w * kl_loss(&target, &soften(z, h.tau)?)?)
}

/// Analytic gradient at `inst.z`; `kl_scale` multiplies the soft part (1 for the real thing).
pub fn analytic_grad(form: LossForm, inst: &Instance, h: Hyper, kl_scale: f64) -> Result<Vec<f64>> {
    let (hard, kl_w, target) = parts(form, inst, h)?;
    let y = one_hot(inst.label, inst.z.len());
    let coeff = match form {
        LossForm::Vanilla => 0.0,
        LossForm::KdStudent => (1.0 - h.alpha) * h.tau,
        LossForm::DmlMember => 1.0 / h.tau,
        LossForm::KdclMember => h.tau,
        LossForm::SwitokdStudent => h.alpha * h.tau,
        LossForm::SwitokdTeacher => h.beta * h.tau,
    };
    debug_assert!((coeff - kl_w / h.tau).abs() <= 1e-12 * coeff.abs().max(1.0));
    composite_logit_grad(&soften(&inst.z, 1.0)?, &y, hard, &soften(&inst.z, h.tau)?, &target, kl_scale * coeff)
}

/// Central differences of [`loss_at`] around `inst.z`.
pub fn numeric_grad(form: LossForm, inst: &Instance, h: Hyper) -> Result<Vec<f64>> {
    let mut z = inst.z.clone();
    let mut out = Vec::with_capacity(z.len());
    for k in 0..z.len() {
        let orig = z[k];
        let step = FD_STEP * orig.abs().max(1.0);
        z[k] = orig + step;
        let up = loss_at(form, inst, h, &z)?;
        z[k] = orig - step;
        let down = loss_at(form, inst, h, &z)?;
        z[k] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// `max|a - n| / max(max|a|, max|n|, 1e-6)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(1e-6, f64::max);
    diff / scale
}

/// Worst case for one (form, tau) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormReport {
    pub form: LossForm,
    pub tau: f64,
    pub instances: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSettings {
    pub alpha: f64,
    pub beta: f64,
    pub instances: usize,
    pub max_classes: usize,
    pub seed: u64,
    /// Multiplies the analytic KL gradient; anything but 1 is a deliberate fault.
    pub kl_scale: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, instances: 100, max_classes: 10, seed: 0, kl_scale: 1.0 }
    }
}

/// Checks every form at every temperature on `settings.instances` random instances each.
pub fn check_forms(forms: &[LossForm], taus: &[f64], settings: CheckSettings) -> Result<Vec<FormReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut reports = Vec::new();
    for &form in forms {
        for &tau in taus {
            let h = Hyper { alpha: settings.alpha, beta: settings.beta, tau };
            let mut worst: f64 = 0.0;
            for _ in 0..settings.instances {
                let inst = Instance::random(&mut rng, settings.max_classes);
                let a = analytic_grad(form, &inst, h, settings.kl_scale)?;
                let n = numeric_grad(form, &inst, h)?;
                worst = worst.max(relative_error(&a, &n));
            }
            reports.push(FormReport { form, tau, instances: settings.instances, max_rel_error: worst });
        }
    }
    Ok(reports)
}
