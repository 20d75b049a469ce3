//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vector is not unit spacelike (|<v,v> - 1| = {0:.3e})")]
    NotUnitSpacelike(f64),

    #[error("degenerate span: {0}")]
    NonDegeneracyFailure(String),

    #[error("orthogonal complement is degenerate: {0}")]
    DegenerateComplement(String),

    #[error("invalid Moebius frame: {0}")]
    InvalidFrame(String),

    #[error("projection onto the Euclidean slice is singular (|<x,w>| = {0:.3e})")]
    ProjectionSingular(f64),

    #[error("point is not on the Euclidean slice of the light cone: {0}")]
    NotOnSlice(String),

    #[error("spheres do not intersect (<v1,v2> = {0:.6})")]
    NoIntersection(f64),

    #[error("argument outside the map domain: {0}")]
    DomainViolation(String),

    #[error("conformal factor vanishes near sample {0:?} (value {1:.3e})")]
    VanishingFactor(Vec<f64>, f64),

    #[error("rank-deficient differential at {0:?} (smallest metric eigenvalue {1:.3e})")]
    RankDeficient(Vec<f64>, f64),

    #[error("degenerate normal space at {0:?}")]
    DegenerateNormalSpace(Vec<f64>),

    #[error("principal-curvature clustering is ambiguous at {0:?} (relative gap {1:.3e})")]
    AmbiguousClustering(Vec<f64>, f64),

    #[error("transform data incompatible with the host immersion: {0}")]
    Compatibility(String),

    #[error("sphere congruence is null (min |<F,F>| = {0:.3e})")]
    NullCongruence(f64),

    #[error("degenerate transform: {0}")]
    DegenerateTransform(String),

    #[error("curve is Frenet-degenerate: {0}")]
    FrenetDegeneracy(String),

    #[error("integrator did not reach the accuracy target: {0}")]
    IntegratorAccuracy(String),

    #[error("parameter out of range: {0}")]
    ParameterRange(String),
}
