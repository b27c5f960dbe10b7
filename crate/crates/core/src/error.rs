use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero-length vector where a direction is required")]
    ZeroVector,
    #[error("segment passes through the origin")]
    SegmentThroughOrigin,
    #[error("cuboid has all-zero half-widths and cannot be subdivided")]
    DegenerateCuboid,
    #[error("invalid cuboid: {0}")]
    InvalidCuboid(String),
    #[error("translation domain is empty")]
    EmptyDomain,
    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("oracle grid has {cells} cells, above the cap of {cap}")]
    GridTooLarge { cells: u128, cap: u128 },
    #[error("{field}: {message}")]
    Format { field: String, message: String },
    #[error("infeasible synthetic configuration: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
