use serde::Serialize;
use thiserror::Error;

use crate::dcopf::DcopfError;
use crate::dispatch::DispatchError;
use crate::grid::GridError;
use crate::metrics::MetricsError;
use crate::placement::PlacementError;
use crate::powerflow::FlowError;
use crate::profile::ProfileError;
use crate::trial::{TrialError, TrialFailure};

/// Any failure of the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Dcopf(#[from] DcopfError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Coarse classification used in machine-readable error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorKind {
    ParseError,
    ValidationError,
    ConfigError,
    ShapeError,
    SingularityError,
    ImbalanceError,
    InfeasibleError,
    NumericalError,
}

impl ErrorKind {
    /// Process exit status: 1 for bad input, 2 for failures of the numerics.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::ParseError | ErrorKind::ValidationError | ErrorKind::ConfigError | ErrorKind::ShapeError => 1,
            _ => 2,
        }
    }
}

fn failure_kind(f: &TrialFailure) -> ErrorKind {
    match f {
        TrialFailure::Profile(e) => profile_kind(e),
        TrialFailure::Dcopf(_) => ErrorKind::InfeasibleError,
        TrialFailure::Dispatch(e) => dispatch_kind(e),
    }
}

fn profile_kind(e: &ProfileError) -> ErrorKind {
    match e {
        ProfileError::Shape(_) => ErrorKind::ShapeError,
        ProfileError::InvalidConfig(_) => ErrorKind::ConfigError,
        ProfileError::NoRenewables | ProfileError::NoLoad => ErrorKind::ValidationError,
    }
}

fn dispatch_kind(e: &DispatchError) -> ErrorKind {
    match e {
        DispatchError::Shape(_) => ErrorKind::ShapeError,
        DispatchError::Numerical { .. } => ErrorKind::NumericalError,
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Grid(GridError::Parse(_)) => ErrorKind::ParseError,
            Error::Grid(GridError::Validation(_)) => ErrorKind::ValidationError,
            Error::Flow(FlowError::Singularity { .. }) => ErrorKind::SingularityError,
            Error::Flow(FlowError::Imbalance { .. }) => ErrorKind::ImbalanceError,
            Error::Flow(FlowError::Shape { .. }) => ErrorKind::ShapeError,
            Error::Dcopf(_) => ErrorKind::InfeasibleError,
            Error::Profile(e) => profile_kind(e),
            Error::Dispatch(e) => dispatch_kind(e),
            Error::Trial(e) => failure_kind(&e.source),
            Error::Placement(PlacementError::Trial(e)) => failure_kind(&e.source),
            Error::Placement(PlacementError::InvalidConfig(_)) => ErrorKind::ConfigError,
            Error::Placement(PlacementError::EmptyCut) => ErrorKind::ValidationError,
            Error::Metrics(MetricsError::Shape(_)) => ErrorKind::ShapeError,
            Error::Metrics(MetricsError::DegenerateDenominator) => ErrorKind::NumericalError,
        }
    }
}
