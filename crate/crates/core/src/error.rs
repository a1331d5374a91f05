use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the inference core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is inconsistent or unsupported.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested convolution policy cannot serve this request.
    #[error("convolution policy error: {0}")]
    Policy(String),

    /// A computation produced non-finite or otherwise unusable numbers.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A per-flow term failed while evaluating a session quantity.
    #[error("flow {index}: {source}")]
    Flow {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    /// The optimizer stopped without meeting its tolerance.
    #[error("optimizer did not converge after {iterations} iterations (best objective {objective})")]
    NonConvergence {
        best: Vec<f64>,
        objective: f64,
        iterations: usize,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn policy(msg: impl Into<String>) -> Self {
        Error::Policy(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn at_flow(self, index: usize) -> Self {
        Error::Flow {
            index,
            source: alloc::boxed::Box::new(self),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
