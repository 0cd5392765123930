use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvrError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate curve: length {0:e} is below 1e-12")]
    DegenerateCurve(f64),

    #[error("grid too coarse: {0} nodes, at least 100 are needed")]
    GridTooCoarse(usize),

    #[error("curve has unbounded reach")]
    UnboundedReach,

    #[error("tube condition violated: acceptance probability {prob:e} for sigma_gamma = {sigma_gamma} inside radius {radius}")]
    TubeCondition {
        prob: f64,
        sigma_gamma: f64,
        radius: f64,
    },

    #[error("vector is not unit length (norm {0})")]
    NonUnitVector(f64),

    #[error("every tested output interval has an empty preimage")]
    EmptyPreimage,

    #[error("eigendecomposition failed for slice {0}")]
    Eigen(usize),

    #[error("no heavy slice among {l} slices; try a smaller l")]
    NoHeavySlices { l: usize },

    #[error("not enough samples: n = {n}, need at least {required}")]
    InsufficientData { n: usize, required: usize },

    #[error("noise level is zero; use the noiseless selector")]
    ZeroNoise,

    #[error("noise level is positive; the noiseless selector requires sigma_zeta = 0")]
    NonzeroNoise,

    #[error("rate fit: {0}")]
    RateFit(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SvrError>;
