use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("stencil at node {node} reaches node {missing} which carries no boundary value")]
    BoundaryDataMissing { node: usize, missing: usize },

    #[error("field does not match the domain: {0}")]
    FieldMismatch(String),

    #[error("invalid density: value {value} at node {node}")]
    InvalidDensity { node: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point outside the chart of metric `{metric}`")]
    ChartDomain { metric: String },

    #[error("mollifier radius {rho} is below the grid spacing {h}")]
    KernelUnderresolved { rho: f64, h: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid solver options: {0}")]
    InvalidOptions(String),

    #[error("positivity lost at node {node} (smallest eigenvalue {eig_min:e}) even at the minimum step")]
    PositivityBreakdown { node: usize, eig_min: f64 },

    #[error("not admissible: m + laplacian = {value} at node {node}")]
    Admissibility { node: usize, value: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("incomplete report: {0}")]
    IncompleteReport(String),

    #[error("snapshot: {0}")]
    Snapshot(String),
}
