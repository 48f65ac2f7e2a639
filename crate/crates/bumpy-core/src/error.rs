use thiserror::Error;

#[derive(Debug, Error)]
pub enum BumpyError {
    #[error("boundary profile leaves the slab -1 < x3 <= 0 (value {0})")]
    ProfileOutOfSlab(f64),
    #[error("fluid region splits into {0} face-connected components")]
    DisconnectedFluid(usize),
    #[error("invalid polynomial index: degree {degree}, index {index}")]
    InvalidIndex { degree: u8, index: u8 },
    #[error("rank-deficient least-squares system: {0}")]
    RankDeficient(String),
    #[error("subregion is not connected ({0} components)")]
    DisconnectedSubregion(usize),
    #[error("input has nonzero mean {0}")]
    MeanNotZero(f64),
    #[error("net boundary flux {0} exceeds tolerance")]
    FluxImbalance(f64),
    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("domain is not horizontally periodic")]
    NonPeriodicDomain,
    #[error("fewer than 5 sample heights ({0})")]
    InsufficientHeights(usize),
    #[error("first-order corrector {0} missing")]
    MissingCorrector1(u8),
    #[error("radius {0} outside the admissible range")]
    RadiusOutOfRange(f64),
    #[error("correctors required for order {0}")]
    MissingCorrectors(u8),
    #[error("grid has {0} points, at least 50 are needed over [eps, 1/2]")]
    GridTooCoarse(usize),
    #[error("hypotheses of the iteration lemma fail: {0}")]
    HypothesesFail(String),
    #[error("generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("Picard iteration diverged at step {0}")]
    PicardDiverged(usize),
    #[error("averaging window {0} smaller than the grid spacing")]
    WindowTooSmall(f64),
    #[error("source too close to boundary: distance {0}")]
    SourceTooCloseToBoundary(f64),
    #[error("fit range too short: {0}")]
    InsufficientRange(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BumpyError>;
