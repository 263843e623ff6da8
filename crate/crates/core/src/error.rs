use thiserror::Error;

/// Error type shared by every stage of the solver.
#[derive(Debug, Error)]
pub enum Error {
    /// Degenerate or inverted element geometry.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The constrained system still admits rigid-body motion.
    #[error("rigid-body error: {0}")]
    RigidBody(String),

    /// Array dimensions do not agree.
    #[error("shape error: expected {expected}, got {got} ({context})")]
    Shape {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// Non-finite values, factorization breakdown, failed iterative solve.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid argument or configuration value.
    #[error("argument error: {0}")]
    Argument(String),

    /// An iterative procedure did not reach its tolerance.
    #[error("convergence error: {message} (residual history: {history:?})")]
    Convergence { message: String, history: Vec<f64> },

    /// Error raised inside a pipeline phase, tagged with that phase.
    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: usize, got: usize, context: &'static str) -> Self {
        Error::Shape {
            expected,
            got,
            context,
        }
    }

    /// Wraps the error with the name of the pipeline phase that produced it.
    pub fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping phase tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Phase { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait PhaseExt<T> {
    fn phase(self, phase: &'static str) -> Result<T>;
}

impl<T> PhaseExt<T> for Result<T> {
    fn phase(self, phase: &'static str) -> Result<T> {
        self.map_err(|e| e.in_phase(phase))
    }
}
