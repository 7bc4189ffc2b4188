use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("wavelengths must be strictly increasing")]
    WavelengthOrder,

    #[error("band count mismatch: cube has {cube} bands, filter array has {msfa}")]
    BandMismatch { cube: usize, msfa: usize },

    #[error("block index ({bx}, {by}) outside grid of {nx} x {ny} blocks")]
    BlockIndex {
        bx: usize,
        by: usize,
        nx: usize,
        ny: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("filter array / mosaic mismatch: {0}")]
    MsfaMismatch(String),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("parameter out of range: {0}")]
    ParamRange(String),

    #[error("singular system; pass a positive ridge epsilon")]
    SingularSystem,

    #[error("objective became non-finite: {0}")]
    NonFiniteObjective(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },

    #[error("non-finite value in payload at element {0}")]
    NonFinitePayload(usize),

    #[error("wavelength {0} nm outside the tabulated observer range [380, 780]")]
    WavelengthRange(f64),

    #[error("empty region mask")]
    EmptyMask,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
