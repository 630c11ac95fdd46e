use thiserror::Error;

/// Errors raised by model construction, solvers and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor argument violates a structural invariant.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A coordinate, weight or cost entry is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Two objects that must share a torus do not.
    #[error("geometry mismatch: {left} vs {right}")]
    GeometryMismatch { left: String, right: String },

    /// The two measures do not carry the same mass per unit volume. The
    /// transport cost is only defined for equal finite intensities; inputs are
    /// never rescaled silently.
    #[error("intensity mismatch: {left} vs {right} (equal intensities required; rescale the weights explicitly)")]
    IntensityMismatch { left: f64, right: f64 },

    /// Transport marginals do not carry equal total mass.
    #[error("unbalanced marginals: source mass {supply}, target mass {demand}")]
    UnbalancedMarginals { supply: f64, demand: f64 },

    /// An iterative solver ran out of its iteration budget.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        /// Per-iteration residual history, for post-mortems.
        trace: Vec<f64>,
    },

    /// A problem exceeds a documented size cap.
    #[error("problem size {size} exceeds cap {cap}: {hint}")]
    SizeCap {
        size: usize,
        cap: usize,
        hint: &'static str,
    },

    /// The operation is only defined for one of the two model kinds.
    #[error("{operation} requires a {required} model")]
    WrongModelKind {
        operation: &'static str,
        required: &'static str,
    },

    /// A kernel fails the Palm balancing identity beyond tolerance.
    #[error("kernel is not balancing: violation {violation:.3e} exceeds {tolerance:.3e}")]
    NotBalancing { violation: f64, tolerance: f64 },

    /// A quadrature grid is too coarse for the requested integrand.
    #[error("quadrature too coarse: {0}")]
    QuadratureTooCoarse(String),

    /// A curve node cannot be identified with a model in the torus family.
    #[error("curve node is not realizable as a configuration: {0}")]
    NotRealizable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("model file: {0}")]
    ModelFile(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
