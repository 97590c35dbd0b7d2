use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("conductances have not been assigned to the graph")]
    MissingConductances,
    #[error("invalid conductance field: {0}")]
    InvalidField(String),
    #[error("invalid horizon {0}: must be positive and finite")]
    InvalidHorizon(f64),
    #[error("requested time {requested} exceeds the event log horizon {horizon}")]
    HorizonExceeded { requested: f64, horizon: f64 },
    #[error("invalid density profile: {0}")]
    InvalidProfile(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("graph has {0} vertices, dense kernels are capped at {cap}; estimate the kernel by Monte Carlo with the Harris engine instead", cap = crate::kernel::DENSE_KERNEL_CAP)]
    TooLarge(usize),
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
