//! Constraint expressions, constraint-satisfaction problems, and the
//! encoders from classifiers, cluster atlases, and attacker capabilities.

mod csp;
mod encode;
mod expr;

use thiserror::Error;

use crate::adm::AdmError;
use crate::dcm::DcmError;

pub use csp::{
    Csp, CspBuilder, CspMetadata, CspStats, Definition, Sort, SymbolTable, VarInfo, VarRole, DELTA_STRICT,
};
pub use encode::{
    access_name, altered_name, delta_name, encode_attack, encode_consistency, encode_dcm, encode_dt, encode_lr,
    encode_consistency_with, encode_membership, encode_membership_slabs, encode_nn, AttackerCapability, EncodeOptions,
    MembershipForm,
};
pub use expr::{
    abs_ratio_limit, format_real, CmpOp, ConstraintExpr, LinExpr, PrintStyle, Printer, Truth, VarId, EPS_DIV,
};

#[derive(Debug, Error)]
pub enum CirError {
    #[error("unknown label {0}")]
    UnknownLabel(usize),
    #[error("expected {expected} variables, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported hidden activation {0}")]
    UnsupportedActivation(String),
    #[error("baseline is not valid: {0}")]
    BaselineInconsistent(String),
    #[error("target label {0} equals the source label")]
    InvalidGoal(usize),
    #[error("invalid capability: {0}")]
    InvalidCapability(String),
    #[error("variable {0} is not declared")]
    UndeclaredVariable(u32),
    #[error("variable {0} used with the wrong sort")]
    SortMismatch(String),
    #[error("non-finite constant in constraint")]
    NonFinite,
    #[error(transparent)]
    Dcm(#[from] DcmError),
    #[error(transparent)]
    Adm(#[from] AdmError),
}
