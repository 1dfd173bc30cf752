use thiserror::Error;

/// Errors raised by the model, simulator, analysis and controller layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid robot parameters: {0}")]
    InvalidParameters(String),

    #[error("parameter domain error: {0}")]
    ParameterDomain(String),

    #[error("degenerate configuration: augmented system condition estimate {condition:.3e}")]
    DegenerateConfiguration { condition: f64 },

    #[error("non-finite state derivative at t = {t}: state {state:?}")]
    NonFiniteDerivative { t: f64, state: [f64; 12] },

    #[error("step size underflow at t = {t} (h = {h:e}); problem may be stiff")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("state blow-up at t = {t}: |x| exceeded {bound:e}, state {state:?}")]
    BlowUp { t: f64, bound: f64, state: [f64; 12] },

    #[error("constraint drift {drift:e} m/s exceeded bound {bound:e} at t = {t}")]
    ConstraintDrift { t: f64, drift: f64, bound: f64 },

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("path is not circular: fit residual {residual:.4} m against radius {radius:.4} m")]
    NotCircular { residual: f64, radius: f64 },

    #[error("linearization singular: |G_8,2| = {g82:e} below floor {floor:e}")]
    LinearizationSingularity { g82: f64, floor: f64 },

    #[error("pendulum angle {beta_deg:.2} deg for requested radius exceeds limit; minimum achievable |rho| = {min_radius:.4} m")]
    InfeasibleRadius { beta_deg: f64, min_radius: f64 },

    #[error("invalid controller configuration: {0}")]
    InvalidController(String),

    #[error("maneuver segment {segment} failed: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateConfiguration { .. }
            | Error::NonFiniteDerivative { .. }
            | Error::StepSizeUnderflow { .. }
            | Error::BlowUp { .. }
            | Error::ConstraintDrift { .. }
            | Error::InsufficientData(_)
            | Error::NotCircular { .. }
            | Error::LinearizationSingularity { .. } => true,
            Error::Segment { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
