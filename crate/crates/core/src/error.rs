use thiserror::Error;

use crate::compiler::EriClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("basis set has no entry for element {0}")]
    MissingElement(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("block class {block} does not match plan class {plan}")]
    ClassMismatch { block: EriClass, plan: EriClass },

    #[error("no execution plan compiled for class {0}")]
    MissingPlan(EriClass),

    #[error("path references node {0} which is absent from the DAG")]
    UnknownNode(String),

    #[error("overlap matrix is numerically singular (eigenvalue {0:e})")]
    LinearDependence(f64),

    #[error("SCF diverged at iteration {0}")]
    Divergence(usize),

    #[error("cannot measure an empty sample")]
    EmptySample,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
