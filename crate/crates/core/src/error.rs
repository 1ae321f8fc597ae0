use thiserror::Error;

use crate::sphere::SpherePoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate triple: two of the points coincide within tolerance")]
    DegenerateTriple,
    #[error("degenerate Möbius transformation (ad - bc = {0:e})")]
    DegenerateMobius(f64),
    #[error("collision detected between {first} and {second} (separation {separation:e})")]
    CollisionDetected {
        first: String,
        second: String,
        separation: f64,
    },
    #[error("configuration needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("invalid rational map: {0}")]
    InvalidMap(String),
    #[error("root finding did not converge (degree {degree}, backward error {residual:e})")]
    RootFindingFailure { degree: usize, residual: f64 },
    #[error("map is not postsingularly finite: orbit of {value} did not close within {steps} steps")]
    NotPostsingularlyFinite { value: SpherePoint, steps: usize },
    #[error("ambiguous cycle near {0}: nearby orbit points refine to different cycles")]
    AmbiguousCycle(SpherePoint),
    #[error("declared invariant set is not forward invariant: image of {0} is not in the set")]
    NotInvariant(SpherePoint),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("path endpoints do not match (gap {0:e})")]
    EndpointMismatch(f64),
    #[error("path passes within {clearance:e} of critical value {value}")]
    NearCriticalValue { value: SpherePoint, clearance: f64 },
    #[error("branch jump suspected at segment {segment} after {depth} subdivisions")]
    BranchJumpSuspected { segment: usize, depth: usize },
    #[error("start lift is not a preimage of the path start (residual {0:e})")]
    BadStartLift(f64),
    #[error("invalid branch datum: {0}")]
    InvalidBranchDatum(String),
    #[error("no applicable punctured-disk comparison at {0}")]
    NoApplicableComparison(SpherePoint),
    #[error("no separating annulus: {0}")]
    NoSeparatingAnnulus(String),
    #[error("injectivity undetermined: {0}")]
    InjectivityUndetermined(String),
    #[error("invalid run state: {0}")]
    InvalidRun(String),
}

pub type Result<T> = std::result::Result<T, Error>;
