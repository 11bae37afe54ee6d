use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate frame: {0}")]
    DegenerateFrame(&'static str),
    #[error("degenerate neighborhood: covariance rank below 2")]
    DegenerateNeighborhood,
    #[error("invalid K = {k} (available points: {available})")]
    InvalidK { k: usize, available: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("pixel ({x}, {y}) outside {width}x{height} image")]
    OutOfImage {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("radiance samples not sorted by depth at index {0}")]
    UnsortedSamples(usize),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
