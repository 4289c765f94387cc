use thiserror::Error;

use crate::flow::ChartPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },

    #[error("unknown identifier `{name}` at column {column}")]
    UnknownIdentifier { name: String, column: usize },

    #[error("flow spec: {0}")]
    Spec(String),

    #[error("trajectory left the domain at t = {time}: {point:?}")]
    LeftDomain { time: f64, point: ChartPoint },

    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("non-finite velocity at {0:?}")]
    NonFinite(ChartPoint),

    #[error("hit_time precondition violated: {0}")]
    HitPrecondition(String),

    #[error("no sign change of the test function within t_max = {t_max}")]
    NoCrossing { t_max: f64 },

    #[error("non-hyperbolic fixed point at {location:?} (min |Re mu| = {min_re:.3e})")]
    NonHyperbolic { location: ChartPoint, min_re: f64 },

    #[error("linearization at {location:?} admits no usable frame: {reason}")]
    DefectiveFrame { location: ChartPoint, reason: String },

    #[error("point {0:?} lies outside the chart ball")]
    OutsideChart(ChartPoint),

    #[error("ordering: {0}")]
    Ordering(String),

    #[error("scaffold failure at stage {stage}: {reason}")]
    Scaffold { stage: usize, reason: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn scaffold(stage: usize, reason: impl Into<String>) -> Self {
        Error::Scaffold {
            stage,
            reason: reason.into(),
        }
    }

    /// True for failures raised while integrating an orbit.
    pub fn is_integration(&self) -> bool {
        matches!(
            self,
            Error::LeftDomain { .. } | Error::StepUnderflow { .. } | Error::NonFinite(_)
        )
    }
}
