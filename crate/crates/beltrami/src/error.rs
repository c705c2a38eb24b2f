//! Crate-wide error type.

use crate::Complex;

/// Errors reported by discretization, gluing, transport, and solver routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A field value left the open unit disk, so it is not a Beltrami
    /// coefficient.
    #[error("field value {value} at {point} has modulus {modulus} >= 1")]
    FieldOutOfDisk {
        point: Complex,
        value: Complex,
        modulus: f64,
    },

    /// A field kind does not provide the exact derivatives a caller needs.
    #[error("field kind `{kind}` does not expose a smooth 2-jet")]
    FieldNotSmooth { kind: &'static str },

    /// A polygon failed a structural invariant.
    #[error("invalid polygon: {reason}")]
    InvalidPolygon { reason: String },

    /// An edge pairing is geometrically inconsistent with its edges.
    #[error("inconsistent edge pairing between polygon {first_polygon} edge {first_edge} and polygon {second_polygon} edge {second_edge}: {reason}")]
    InconsistentPairing {
        first_polygon: usize,
        first_edge: usize,
        second_polygon: usize,
        second_edge: usize,
        reason: String,
    },

    /// A pair of unbounded edges was glued without the marked points that pin
    /// the (otherwise non-unique) gluing map.
    #[error("gluing of unbounded edges requires marked points on both rays")]
    MissingMarkedPoints,

    /// The complex does not close up into a sphere.
    #[error("Euler check failed: V - E + F = {chi}, expected 2")]
    EulerCheckFailed { chi: i64 },

    /// An evaluation point fell inside the guard disk of a pole.
    #[error("evaluation point {point} is within {distance:.3e} of pole {pole} (guard {guard:.3e})")]
    PoleProximity {
        point: Complex,
        pole: Complex,
        distance: f64,
        guard: f64,
    },

    /// A transport segment passes through the guard disk of a pole that is
    /// not a declared endpoint.
    #[error("segment [{start}, {end}] passes within {distance:.3e} of pole {pole}")]
    PoleOnSegment {
        start: Complex,
        end: Complex,
        pole: Complex,
        distance: f64,
    },

    /// A chart was asked to rest at a pole whose residue makes the endpoint
    /// non-integrable.
    #[error("chart endpoint at pole with residue {residue} is not integrable (Re res <= -1)")]
    NonIntegrableEndpoint { residue: Complex },

    /// A residue hit the excluded set of the normal-form construction.
    #[error("normal form undefined: residue {residue} is within {distance:.3e} of the excluded integer {nearest}")]
    UnsupportedResidue {
        residue: Complex,
        nearest: i64,
        distance: f64,
    },

    /// Two poles came closer than the collision guard during a solve.
    #[error("poles {first} and {second} collided (distance {distance:.3e} < {guard:.3e})")]
    PoleCollision {
        first: Complex,
        second: Complex,
        distance: f64,
        guard: f64,
    },

    /// The normalization points of a face configuration nearly coincide.
    #[error("degenerate normalization: anchor points {first} and {second} nearly coincide")]
    DegenerateNormalization { first: Complex, second: Complex },

    /// No valid interior basepoint could be found for a face development.
    #[error("no valid development basepoint for face {face}")]
    FaceBasepointFailed { face: usize },

    /// A development path could not be routed clear of the poles.
    #[error("development path for face {face} obstructed near pole {pole}")]
    FacePathObstruction { face: usize, pole: Complex },

    /// The Levenberg-Marquardt loop stopped making progress above tolerance.
    #[error("solver stagnated at amplitude {amplitude}: residual {residual:.3e} after {iterations} iterations (tol {tol:.3e})")]
    SolverStagnation {
        amplitude: f64,
        residual: f64,
        iterations: usize,
        tol: f64,
    },

    /// Amplitude continuation was driven below the minimum step.
    #[error("continuation step fell below {min_step} at amplitude {amplitude}")]
    ContinuationFailed { amplitude: f64, min_step: f64 },

    /// Newton inversion of a developed chart failed to converge.
    #[error("chart inversion stalled at {point} after {iterations} iterations")]
    NewtonStalled { point: Complex, iterations: usize },

    /// Shooting for a saddle connection failed to capture the target.
    #[error("saddle-connection shooting from {from} to {to} failed: {reason}")]
    ShootingFailed {
        from: Complex,
        to: Complex,
        reason: String,
    },

    /// An adaptive quadrature exceeded its subdivision budget.
    #[error("quadrature did not converge on [{start}, {end}]: {reason}")]
    QuadratureFailed {
        start: Complex,
        end: Complex,
        reason: String,
    },

    /// A point expected inside the grid (or a face) could not be located.
    #[error("point {point} could not be located: {reason}")]
    PointNotLocated { point: Complex, reason: String },

    /// Malformed input data (interchange files, scenario snippets, …).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Filesystem failure while reading or writing interchange files.
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Serialization / deserialization failure.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
