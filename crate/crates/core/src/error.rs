use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: target is {distance:.3e} m from node {node} (minimum 1e-6 m)")]
    DegenerateGeometry { node: usize, distance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("AR(1) coefficient {0} is not stationary, |a| must be < 1")]
    NonStationary(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ill-conditioned {context}: condition number estimate {condition:.3e} exceeds {limit:.1e}")]
    Conditioning {
        context: String,
        condition: f64,
        limit: f64,
    },

    #[error("matrix not positive definite in {context} (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite {
        context: String,
        pivot: usize,
        value: f64,
    },

    #[error("case {0} carries no estimable information: {1}")]
    Singular(u8, String),

    #[error("waveform file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
