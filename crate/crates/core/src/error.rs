use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("coefficient {value} outside [{lower}, {upper}] at t = {t}, cell {cell}")]
    CoefficientBounds {
        t: f64,
        cell: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    /// A hypothesis of one of the estimates is not met.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("negative concentration {value} for species {species} at cell {cell}")]
    Negative {
        species: usize,
        cell: usize,
        value: f64,
    },

    #[error("step rejected after {retries} halvings (min value {min_value})")]
    StepRejected { retries: u32, min_value: f64 },

    #[error("blow-up guard: sup norm {value} exceeds ceiling {ceiling} at t = {t}")]
    BlowUp { t: f64, value: f64, ceiling: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("equilibrium lies on the boundary of the positive cone: {0}")]
    BoundaryEquilibrium(String),

    #[error("{0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by a violated mathematical hypothesis rather
    /// than malformed input or a numerical breakdown.
    pub fn is_hypothesis(&self) -> bool {
        matches!(self, Error::Hypothesis(_) | Error::BoundaryEquilibrium(_))
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::StepRejected { .. }
                | Error::NonConvergence { .. }
                | Error::Numerical(_)
                | Error::Negative { .. }
        )
    }
}
