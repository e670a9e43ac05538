//! Command-line front end: configuration files, run directories and reports.

pub mod compare;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod run;
pub mod timeline;

pub use compare::{cmd_compare, CompareRow};
pub use config::{DataSpec, RunConfig};
pub use error::{CliError, CliResult};
pub use gradcheck::{cmd_grad_check, GradCheckArgs};
pub use run::{cmd_train, run_train, RunManifest};
pub use timeline::cmd_timeline;
