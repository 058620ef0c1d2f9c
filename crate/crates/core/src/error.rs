use alloc::vec::Vec;

/// Failures raised by the geometric and dynamical operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("ambient metric is singular (min singular value {min_singular:e})")]
    MetricSingular { min_singular: f64 },
    #[error("constraint differential vanishes on the level set (norm {norm:e})")]
    RegularityViolated { norm: f64 },
    #[error("vector is not tangent to the constraint manifold (residual {residual:e})")]
    TangencyViolated { residual: f64 },
    #[error("observed corank {found} differs from registered corank {expected}")]
    CorankMismatch { expected: usize, found: usize },
    #[error("null generators do not span the null distribution (residual {residual:e})")]
    GeneratorSpanError { residual: f64 },
    #[error("combined null/transversal basis is ill-conditioned (condition {condition:e})")]
    SplittingIllConditioned { condition: f64 },
    #[error("restricted form on the transversal complement is not positive definite")]
    IndefiniteTransversalForm,
    #[error("Newton projection onto the constraint failed (residual {residual:e})")]
    ProjectionDiverged { residual: f64 },
    #[error("non-finite state encountered at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("transversal dissipation estimate violated (ratio {ratio:e})")]
    DissipationViolated { witness: Vec<f64>, ratio: f64 },
    #[error("no sample has transversal motion above the floor")]
    NoTransversalMotion,
    #[error("omega-limit clustering produced more than {budget} clusters")]
    ClusterBudgetExceeded { budget: usize },
    #[error("quotient differential restricted to the transversal complement is singular")]
    QuotientRankError,
    #[error("box counting needs at least {min_points} points and scales spanning {min_decades} decades")]
    DegenerateScaleRange { min_points: usize, min_decades: f64 },
    #[error("linearization contains non-finite entries")]
    NonFiniteJacobian,
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
