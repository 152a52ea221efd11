use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NavError>;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("unknown planet `{0}`")]
    UnknownPlanet(String),
    #[error("epoch {t} s is outside the ephemeris validity window [{start}, {end}] s")]
    OutsideEphemerisWindow { t: f64, start: f64, end: f64 },
    #[error("catalog line {line}: {msg}")]
    CatalogParse { line: usize, msg: String },
    #[error("duplicate star id {0}")]
    DuplicateStar(u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("projection falls behind the camera")]
    BehindCamera,
    #[error("star identification failed: {0}")]
    IdentificationFailure(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl NavError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NavError::Io {
            path: path.into(),
            source,
        }
    }
}
