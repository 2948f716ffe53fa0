//! Mapping of library errors onto the exit-code contract:
//! 0 ok, 1 internal, 2 invalid input or failed hypothesis, 3 degeneracy.

use std::fmt;

use hetindex::bifurcation::BifurcationError;
use hetindex::expr::ExprError;
use hetindex::flow::FlowError;
use hetindex::linalg::LinalgError;
use hetindex::maslov::MaslovError;
use hetindex::parity::ParityError;
use hetindex::z2index::IndexError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Internal = 1,
    Invalid = 2,
    Degenerate = 3,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Invalid, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Internal, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn linalg_kind(e: &LinalgError) -> ExitKind {
    match e {
        LinalgError::RankDeficient { .. } => ExitKind::Degenerate,
        LinalgError::DimensionMismatch(_) | LinalgError::NotHyperbolic { .. } => ExitKind::Invalid,
        LinalgError::GapTooLarge { .. } | LinalgError::SchurFailed => ExitKind::Internal,
    }
}

fn flow_kind(e: &FlowError) -> ExitKind {
    match e {
        FlowError::Integration { .. } => ExitKind::Internal,
        FlowError::NotStabilized { .. }
        | FlowError::NotHyperbolic { .. }
        | FlowError::DimMismatch { .. }
        | FlowError::HorizonNotResolved { .. }
        | FlowError::Invalid(_)
        | FlowError::Expr(_) => ExitKind::Invalid,
        FlowError::Linalg(l) => linalg_kind(l),
    }
}

fn index_kind(e: &IndexError) -> ExitKind {
    match e {
        IndexError::DegenerateEndpoint { .. }
        | IndexError::TailNotTransversal { .. }
        | IndexError::BoundaryDegenerate { .. }
        | IndexError::CannotClose { .. } => ExitKind::Degenerate,
        IndexError::NotClosed { .. } | IndexError::Discontinuous { .. } | IndexError::Invalid(_) => {
            ExitKind::Invalid
        }
        IndexError::Linalg(l) => linalg_kind(l),
        IndexError::Flow(f) => flow_kind(f),
    }
}

fn parity_kind(e: &ParityError) -> ExitKind {
    match e {
        ParityError::DegenerateEndpoint { .. } | ParityError::EndpointDegenerate { .. } => {
            ExitKind::Degenerate
        }
        ParityError::HypothesisFailure { .. } | ParityError::Invalid(_) => ExitKind::Invalid,
        ParityError::UnstableTruncation { .. } | ParityError::InternalMismatch { .. } => {
            ExitKind::Internal
        }
        ParityError::Index(i) => index_kind(i),
        ParityError::Flow(f) => flow_kind(f),
        ParityError::Linalg(l) => linalg_kind(l),
    }
}

fn bifurcation_kind(e: &BifurcationError) -> ExitKind {
    match e {
        BifurcationError::BranchResidualTooLarge { .. }
        | BifurcationError::BranchLimit { .. }
        | BifurcationError::HypothesisFailure { .. }
        | BifurcationError::Invalid(_)
        | BifurcationError::Expr(_) => ExitKind::Invalid,
        BifurcationError::Flow(f) => flow_kind(f),
        BifurcationError::Index(i) => index_kind(i),
        BifurcationError::Parity(p) => parity_kind(p),
    }
}

fn maslov_kind(e: &MaslovError) -> ExitKind {
    match e {
        MaslovError::DimensionMismatch(_) | MaslovError::NotLagrangian { .. } => ExitKind::Invalid,
        MaslovError::DegenerateForm { .. } | MaslovError::IrregularCrossing { .. } => {
            ExitKind::Degenerate
        }
        MaslovError::NotGraphical { .. } | MaslovError::NotACrossing { .. } => ExitKind::Internal,
        MaslovError::Index(i) => index_kind(i),
        MaslovError::Linalg(l) => linalg_kind(l),
    }
}

macro_rules! from_lib {
    ($($ty:ty => $kind:expr),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                let kind: fn(&$ty) -> ExitKind = $kind;
                CliError::new(kind(&e), e.to_string())
            }
        })*
    };
}

from_lib! {
    ExprError => |_| ExitKind::Invalid,
    LinalgError => linalg_kind,
    FlowError => flow_kind,
    IndexError => index_kind,
    ParityError => parity_kind,
    BifurcationError => bifurcation_kind,
    MaslovError => maslov_kind,
}
