use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contraction shape mismatch: {0}")]
    ContractionShape(String),
    #[error("non-finite value in tensor data")]
    NonFinite,
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("registry error: {0}")]
    Registry(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("gauge error: {0}")]
    Gauge(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("leg kind mismatch: {0}")]
    KindMismatch(String),
    #[error("leg already wired: {0}")]
    AlreadyWired(String),
    #[error("wiring would create a cycle: {0}")]
    WouldCreateCycle(String),
    #[error("unknown node or leg: {0}")]
    Unknown(String),
    #[error("circuit is not closed: {0}")]
    NotClosed(String),
    #[error("unresolved placeholder: {0}")]
    UnresolvedPlaceholder(String),
    #[error("imaginary residue {0:e} in a probability")]
    ImaginaryResidue(f64),
    #[error("negative probability {0:e}")]
    NegativeProbability(f64),
    #[error("inadmissible conditioning frame: {0}")]
    Frame(String),
    #[error("tensor is not physical: {0}")]
    NotPhysical(String),
    #[error("dilation unitarity residue {0:e} exceeds tolerance")]
    UnitarityResidue(f64),
    #[error("degenerate fiducial set (condition number {0:e})")]
    DegenerateFiducials(f64),
    #[error("imaginary component {0:e} in duotensor")]
    ImaginaryComponent(f64),
    #[error("classical operation is not doubly summing: {0}")]
    NotDoublySumming(String),
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown type `{name}` at {line}:{col}")]
    UnknownType { line: usize, col: usize, name: String },
    #[error("arity error at {line}:{col}: {msg}")]
    Arity { line: usize, col: usize, msg: String },
}
