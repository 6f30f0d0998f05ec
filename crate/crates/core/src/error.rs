use thiserror::Error;

use crate::lattice::LatticePoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty domain")]
    EmptyDomain,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {dim} outside supported range 2..={max}")]
    DimensionOutOfRange { dim: usize, max: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid exhaustion: {0}")]
    InvalidExhaustion(String),

    #[error("stencil outside domain at {0}")]
    StencilOutsideDomain(LatticePoint),

    #[error("{0} is not a boundary vertex")]
    NotBoundaryVertex(LatticePoint),

    #[error("lattice functions live on different domains")]
    DomainMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shift too small: L = {shift} must exceed 2*lambda = {}", 2.0 * .lambda)]
    ShiftTooSmall { shift: f64, lambda: f64 },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolveFailed { iterations: usize, residual: f64 },

    #[error("source outside domain at {0}")]
    SourceOutsideDomain(LatticePoint),

    #[error("monotonicity violated by {amount:e} at {vertex} in outer iteration {iteration}")]
    MonotonicityViolated {
        amount: f64,
        vertex: LatticePoint,
        iteration: usize,
    },

    #[error("outer iteration cap {iterations} reached (last successive difference {last_diff:e})")]
    OuterIterationCap { iterations: usize, last_diff: f64 },

    #[error("exhaustion tolerance {ext_tol:e} not reached; observed differences {diffs:?}")]
    ExhaustionNotConverged { ext_tol: f64, diffs: Vec<f64> },

    #[error(
        "domain monotonicity violated by {amount:e} at {vertex} between radii {inner} and {outer}"
    )]
    DomainMonotonicityViolated {
        amount: f64,
        vertex: LatticePoint,
        inner: i32,
        outer: i32,
    },

    #[error("window too small or solution trivial: {0}")]
    DecayFit(String),

    #[error("Green's function with zero limit exists only for n >= 3 (got n = {0})")]
    GreenDimension(usize),

    #[error("quadrature error estimate {achieved:e} exceeds requested tolerance {requested:e}")]
    QuadratureTolerance { achieved: f64, requested: f64 },

    #[error(
        "candidate is not a subsolution: {equation}-inequality fails at {vertex} by {defect:e}"
    )]
    NotSubsolution {
        equation: &'static str,
        vertex: LatticePoint,
        defect: f64,
    },

    #[error("bound undefined: lambda = {lambda} must exceed 2B = {}", 2.0 * .mass)]
    BoundUndefined { lambda: f64, mass: f64 },

    #[error("Newton iteration failed: {0}")]
    NewtonFailed(String),

    #[error("{0}")]
    Sweep(String),
}
