use std::path::PathBuf;

use crate::source::ComponentIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A covariance that should be positive definite failed to factor, even
    /// after the single jitter retry.
    #[error("covariance not numerically positive definite{}", component_suffix(.component))]
    NotPositiveDefinite { component: Option<ComponentIndex> },

    #[error("quadrature oracle supports at most 3 dimensions, got {0}")]
    UnsupportedSize(usize),

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("writing output: {0}")]
    Output(String),
}

fn component_suffix(component: &Option<ComponentIndex>) -> String {
    match component {
        Some(c) => format!(" for component {c}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Attach a mixture component to a factorization failure.
    pub(crate) fn at_component(self, index: ComponentIndex) -> Self {
        match self {
            Error::NotPositiveDefinite { component: None } => Error::NotPositiveDefinite {
                component: Some(index),
            },
            other => other,
        }
    }
}
