//! `grad-check`: analytic logit gradients of each loss form against central differences.

use serde::Serialize;
use switokd::losscheck::{check_forms, CheckSettings, FormReport, LossForm};
use switokd::train::Strategy;

use crate::error::{CliError, CliResult};

pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckArgs {
    pub strategy: Strategy,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub instances: usize,
    /// Doubles the analytic KL gradient.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckOutcome {
    pub tolerance: f64,
    pub reports: Vec<FormReport>,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.max_rel_error <= self.tolerance)
    }
}

pub fn cmd_grad_check(args: GradCheckArgs) -> CliResult<GradCheckOutcome> {
    if !(args.tau > 0.0 && args.tau.is_finite()) {
        return Err(CliError::field("tau", "must be positive"));
    }
    for (v, f) in [(args.alpha, "alpha"), (args.beta, "beta")] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::field(f, "must be a finite non-negative number"));
        }
    }
    if args.instances == 0 {
        return Err(CliError::field("instances", "must be at least 1"));
    }
    let settings = CheckSettings {
        alpha: args.alpha,
        beta: args.beta,
        instances: args.instances,
        seed: args.seed,
        kl_scale: if args.inject_fault { 2.0 } else { 1.0 },
        ..Default::default()
    };
    let reports = check_forms(LossForm::for_strategy(args.strategy), &[args.tau], settings)?;
    Ok(GradCheckOutcome { tolerance: TOLERANCE, reports })
}
