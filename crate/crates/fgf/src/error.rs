use thiserror::Error;

/// Errors raised by ring, series, and deformation computations.
///
/// The variant names are stable and surface verbatim in CLI output, so
/// downstream tooling can match on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("DescriptorMismatch: {0}")]
    DescriptorMismatch(String),

    #[error("BadDescriptor: {0}")]
    BadDescriptor(String),

    #[error("NonUnitJacobian: endomorphism linearization is singular modulo the maximal ideal")]
    NonUnitJacobian,

    #[error("NonzeroConstant: inner series of a composition has a nonzero constant term")]
    NonzeroConstant,

    #[error("NonUnitLinear: series has no invertible linear coefficient")]
    NonUnitLinear,

    #[error("NoUnitCoefficient: every coefficient is topologically nilpotent at this truncation")]
    NoUnitCoefficient,

    #[error("TruncationTooSmall: {0}")]
    TruncationTooSmall(String),

    #[error("IntegralityFailure: {0}")]
    IntegralityFailure(String),

    #[error("AxiomFailure: {axiom} fails first at total degree {degree}")]
    AxiomFailure { axiom: &'static str, degree: usize },

    #[error("ResidueMismatch: {0}")]
    ResidueMismatch(String),

    #[error("NotInvariant: quotient system inconsistent at filtration stage {stage}")]
    NotInvariant { stage: usize },

    #[error("NotADeformation: {0}")]
    NotADeformation(String),

    #[error("ObstructionUnsolvable: cocycle system inconsistent at filtration stage {stage}, degree {degree}")]
    ObstructionUnsolvable { stage: usize, degree: usize },

    #[error("NonUniqueSolution: classification system underdetermined (raise trunc_t)")]
    NonUniqueSolution,

    #[error("NoProgress: defect filtration order did not increase ({before} -> {after})")]
    NoProgress { before: usize, after: usize },

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),

    #[error("Json: {0}")]
    Json(String),

    #[error("Usage: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
