//! Error types shared across the solver stack.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommError {
    #[error("message tag mismatch from rank {from}: expected {expected}, got {got}")]
    TagMismatch { expected: u32, got: u32, from: usize },
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cannot decompose {nx}x{ny} unique nodes over {ranks} ranks: {reason}")]
    Decomposition {
        nx: usize,
        ny: usize,
        ranks: usize,
        reason: String,
    },
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("row ({i},{j}) assembled twice")]
    DuplicateRow { i: usize, j: usize },
    #[error("row ({i},{j}) offset ({di},{dj}) exceeds ghost width {width}")]
    OffsetBeyondGhost {
        i: usize,
        j: usize,
        di: i32,
        dj: i32,
        width: usize,
    },
    #[error("row ({i},{j}) not owned by this subdomain")]
    RowNotOwned { i: usize, j: usize },
    #[error("{missing} owned rows were never assembled")]
    MissingRows { missing: usize },
}

#[derive(Debug, Error)]
pub enum LinsolveError {
    #[error("zero diagonal at local row {row}; Jacobi preconditioner undefined")]
    Preconditioner { row: usize },
    #[error("matrix/vector ghost width mismatch: matrix built for {matrix}, field has {field}")]
    Contract { matrix: usize, field: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("{system} solve failed to converge: {iterations} iterations, residual {residual:e}")]
    NotConverged {
        system: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: cannot parse `{text}`: {reason}")]
    Parse {
        line: usize,
        text: String,
        reason: String,
    },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}
