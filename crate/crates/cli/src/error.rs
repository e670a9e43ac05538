use thiserror::Error;

/// Failure of a subcommand. The variant decides the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or malformed input files (exit 1).
    #[error("{0}")]
    Validation(String),
    /// Training aborts, numeric failures, I/O (exit 2).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn field(field: &str, msg: impl std::fmt::Display) -> Self {
        let msg = msg.to_string();
        if msg.starts_with("config error in `") {
            return CliError::Validation(msg);
        }
        CliError::Validation(format!("config error in `{field}`: {msg}"))
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<switokd::Error> for CliError {
    fn from(e: switokd::Error) -> Self {
        use switokd::Error as E;
        match e {
            E::Config { .. } | E::Format { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
