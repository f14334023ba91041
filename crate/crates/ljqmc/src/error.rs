use thiserror::Error;

/// Errors shared across the engine.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate configuration: atoms {0} and {1} are coincident (r = {2:e})")]
    DegenerateConfiguration(usize, usize, f64),

    #[error("distance set not realizable in D >= N-1: Grammian eigenvalue {min:e} (largest {max:e})")]
    UnrealizableDistances { min: f64, max: f64 },

    #[error("near-collinear configuration: omega = {0:e} below threshold")]
    NearCollinear(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("node proximity: trial wavefunction vanishes at this configuration")]
    NodeProximity,

    #[error("parameter out of range: {0}")]
    ParameterRange(String),

    #[error("step-size tuning failed: {0}")]
    Tuning(String),

    #[error("sample poisoned: non-finite entry at sample {sample}, basis {basis}")]
    SamplePoisoned { sample: usize, basis: usize },

    #[error("all singular values discarded: estimator has rank zero")]
    RankZero,

    #[error("degenerate state: vanishing norm in variance objective")]
    DegenerateState,

    #[error("projection time step too large: weight dynamic range {0:e} exceeded limit")]
    TimeStep(f64),

    #[error("insufficient projection: only {0} usable time points (need >= 3)")]
    InsufficientProjection(usize),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("transform inconsistency: cartesian {cartesian} vs distance-space {distance}")]
    TransformInconsistency { cartesian: f64, distance: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
