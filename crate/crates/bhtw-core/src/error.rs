//! Error type shared by the simulation and analysis layers.
//!
//! Two broad classes matter to callers: configuration/validation errors
//! (rejected inputs, shape mismatches) and numeric failures discovered during
//! a run (conservation violations, non-finite states, degenerate
//! normalizations). The CLI maps the former to exit code 2 and the latter to
//! exit code 3.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;

/// All failure modes surfaced by the core library.
#[derive(Debug, Clone, thiserror::Error)]
pub enum CoreError {
    /// A parameter failed validation before any computation started.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Two inputs that must agree in dimension did not.
    #[error("shape mismatch: {what}")]
    ShapeMismatch { what: String },

    /// A conserved quantity drifted beyond the configured tolerance.
    #[error(
        "conservation violated: {quantity} relative drift {drift:.3e} exceeds {tol:.1e} at t = {t}"
    )]
    ConservationViolated {
        quantity: &'static str,
        drift: f64,
        tol: f64,
        /// Time of the first violation.
        t: f64,
    },

    /// The state left the representable range (NaN/inf) during integration.
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    /// A number-phase operation was asked to divide by a vanishing occupation.
    #[error("singular state: occupation at site {site} is {value:.3e}, too small for the angle equations")]
    SingularOccupation { site: usize, value: f64 },

    /// An entropy input was negative beyond tolerance.
    #[error("entropy domain violation at site {site}: occupation {value:.3e} is negative beyond tolerance")]
    EntropyDomain { site: usize, value: f64 },

    /// A normalization that an observable divides by is numerically zero.
    #[error("degenerate normalization: {what}")]
    DegenerateNormalization { what: String },

    /// A fit was requested on data that cannot support it.
    #[error("fit rejected: {reason}")]
    FitRejected { reason: String },

    /// A trajectory inside an ensemble failed; carries the trajectory index
    /// and the underlying failure.
    #[error("trajectory {index} failed: {source}")]
    TrajectoryFailed {
        index: usize,
        #[source]
        source: Box<CoreError>,
    },
}

impl CoreError {
    /// True for failures discovered mid-computation on otherwise valid input
    /// (the CLI's "numeric failure" class), false for input validation errors.
    pub fn is_numeric(&self) -> bool {
        match self {
            CoreError::ConservationViolated { .. }
            | CoreError::NonFiniteState { .. }
            | CoreError::SingularOccupation { .. }
            | CoreError::EntropyDomain { .. }
            | CoreError::DegenerateNormalization { .. } => true,
            CoreError::TrajectoryFailed { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
