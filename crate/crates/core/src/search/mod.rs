//! Feasibility search: turn an intended truth pattern into completeness
//! constraints and look for embeddings satisfying them by gradient descent.
//!
//! The truth pattern is fixed for the whole run; satisfaction is not
//! re-derived from the moving embeddings. Optimized models are re-audited
//! with their real satisfaction relation afterwards.

mod constraints;
mod optimizer;
mod random;
mod report;
mod spec;

use thiserror::Error;

use crate::logic::LogicError;
use crate::semantics::SemanticsError;

pub use constraints::{build_constraints, loss, loss_grad, Constraint, ModelGradient};
pub use optimizer::{
    optimize, trace_csv, Margins, OptimizeResult, OptimizerConfig, TraceRecord, GUARD_MIN_NORM,
    GUARD_RESET_NORM, MAX_HALVINGS,
};
pub use random::{random_config, RandomConfig, TargetMode};
pub use report::{feasibility_report, FeasibilityRow, FeasibilityRun, FeasibilitySummary, MetricAggregate};
pub use spec::{TruthSpec, TruthSpecFile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid truth spec at key {key:?}: {reason}")]
    InvalidSpec { key: String, reason: String },
    #[error("malformed truth spec: {0}")]
    Malformed(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

impl From<crate::geometry::GeometryError> for SearchError {
    fn from(e: crate::geometry::GeometryError) -> Self {
        SearchError::Semantics(SemanticsError::Geometry(e))
    }
}
