use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("subdivision count must be at least 1, got {0}")]
    InvalidSubdivisions(usize),
    #[error("jitter {0} outside [0, 0.3]")]
    InvalidJitter(f64),
    #[error("triangle {triangle} is degenerate (signed area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("triangle {triangle} references vertex {vertex} but only {count} vertices exist")]
    VertexOutOfRange {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("mesh is already barycentrically refined")]
    AlreadyBarycentric,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuadratureError {
    #[error("quadrature degree {degree} unsupported (valid range 1..={max})")]
    UnsupportedDegree { degree: usize, max: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("stabilization parameter undefined: ||beta||_inf must be positive, got {0}")]
    ZeroBetaScale(f64),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("vorticity stabilization requires a curl of the forcing")]
    MissingCurlF,
    #[error("{what} check failed at ({x}, {y}): relative error {error:e}")]
    CallbackMismatch {
        what: &'static str,
        x: f64,
        y: f64,
        error: f64,
    },
    #[error("triangle {0} has a degenerate Jacobian")]
    DegenerateElement(usize),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("triplet ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("matrix is not square ({nrows}x{ncols})")]
    NotSquare { nrows: usize, ncols: usize },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular pivot at dof {dof}")]
    SingularPivot { dof: usize },
    #[error("relative residual {residual:e} exceeds tolerance {tolerance:e} after refinement")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("unknown example id {0} (expected 1..=4)")]
    UnknownExample(u32),
    #[error("need at least two levels with positive errors")]
    NotEnoughLevels,
    #[error("benchmark data inconsistent: {0}")]
    Inconsistent(String),
}

/// Error type for the full solve pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
