use thiserror::Error;

/// Errors produced by the distillation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error{}: {msg}", layer_suffix(*.layer))]
    Shape { layer: Option<usize>, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error{}: {msg}", layer_suffix(*.layer))]
    Numeric { layer: Option<usize>, msg: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training aborted at iteration {iteration}: {msg}")]
    Aborted { iteration: usize, msg: String },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn layer_suffix(layer: Option<usize>) -> String {
    match layer {
        Some(l) => format!(" in layer {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape { layer: None, msg: msg.into() }
    }

    pub(crate) fn layer_shape(layer: usize, msg: impl Into<String>) -> Self {
        Error::Shape { layer: Some(layer), msg: msg.into() }
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { field: field.into(), msg: msg.into() }
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
