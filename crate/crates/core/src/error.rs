use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("element index {index} out of range for mesh with {count} elements")]
    ElementOutOfRange { index: usize, count: usize },
    #[error("element {element} has non-positive signed area {area:e}")]
    NonPositiveArea { element: usize, area: f64 },
    #[error("edge ({0}, {1}) is shared by more than two elements")]
    NonManifoldEdge(usize, usize),
    #[error("vertex {vertex} hangs on edge ({a}, {b})")]
    HangingVertex { vertex: usize, a: usize, b: usize },
    #[error("refinement closure did not terminate after {0} sweeps; refinement edges are inconsistent")]
    ClosureDiverged(usize),
    #[error("field has {got} values but the mesh has {expected} vertices")]
    FieldLength { expected: usize, got: usize },
    #[error("malformed mesh dump at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    /// Zero pivot or a solution whose backward error shows the factorization broke down.
    #[error("singular matrix (pivot {pivot:?}, backward error {backward_error:e})")]
    Singular {
        pivot: Option<usize>,
        backward_error: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("non-finite {quantity} on element {element}")]
    NonFinite {
        element: usize,
        quantity: &'static str,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("problem '{0}' has no exact solution attached")]
    NoExactSolution(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for '{field}': {reason}")]
    Invalid { field: String, reason: String },
    #[error("missing required parameter '{0}'")]
    Missing(String),
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed CSV at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("column '{0}' is missing or empty")]
    MissingColumn(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
