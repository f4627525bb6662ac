use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Evaluation point too close to the support of a measure.
    #[error("point {point} is within {dist:.3e} of the measure support")]
    OnSupport { point: Complex64, dist: f64 },

    /// Newton inversion of the flow did not converge even after
    /// continuation refinement.
    #[error("flow inversion failed at t={t}, z={z}: residual {residual:.3e} at iterate {iterate}")]
    SolverFailed {
        t: f64,
        z: Complex64,
        iterate: Complex64,
        residual: f64,
    },

    /// The inverse-map derivative is requested too close to a critical
    /// point of the forward map (spectral edge image).
    #[error("|g'(w)| = {magnitude:.3e} too small near a critical point at w={w}")]
    CriticalPoint { w: Complex64, magnitude: f64 },

    /// A jet with vanishing first derivative cannot define a Schwarzian.
    #[error("degenerate map: first derivative is zero")]
    DegenerateJet,

    /// The contour moment self-check m0=1 failed (radius too small or
    /// quadrature under-resolved).
    #[error("contour check failed: |m0 - 1| = {defect:.3e}")]
    ContourCheck { defect: f64 },

    /// Node-doubling quadrature hit its cap before converging.
    #[error("quadrature did not converge: last delta {delta:.3e} at {nodes} nodes")]
    QuadratureStalled { delta: f64, nodes: usize },

    /// Recursive step halving exceeded its budget; the configuration is
    /// too stiff for the requested base step.
    #[error("step halving budget exceeded: min gap {min_gap:.3e} after {halvings} halvings")]
    StiffStep { min_gap: f64, halvings: u32 },

    /// Too many Monte Carlo replicas failed.
    #[error("{failed} of {total} replicas failed (first: {first})")]
    ReplicaFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
