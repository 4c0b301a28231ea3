use thiserror::Error;

use crate::continuation::CpfTrace;
use crate::grid::NodeKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("branch {from}-{to} has a singular impedance matrix (rcond {rcond:.3e})")]
    SingularBranch { from: u32, to: u32, rcond: f64 },

    #[error("{element} is not symmetric (relative deviation {deviation:.3e})")]
    AsymmetricParameter { element: String, deviation: f64 },

    #[error("interior block over {nodes:?} is numerically singular (rcond {rcond:.3e})")]
    SingularInteriorBlock { nodes: Vec<NodeKey>, rcond: f64 },

    #[error("Thevenin impedance of slack node {node} is singular")]
    SingularThevenin { node: u32 },

    #[error("zero voltage at node {node}, phase {phase}")]
    ZeroVoltage { node: u32, phase: usize },

    #[error("denominator 1+a vanishes at node {node}, phase {phase} (|1+a| = {magnitude:.3e})")]
    DegenerateDenominator {
        node: u32,
        phase: usize,
        magnitude: f64,
    },

    #[error("Newton iteration did not converge in {iterations} steps (last residual {:.3e})", residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("singular Jacobian")]
    SingularJacobian,

    #[error("base-case power flow at xi = {xi} diverged: {source}")]
    BaseCaseDiverged {
        xi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("continuation stopped after {} samples without reaching the fold", .0.samples.len())]
    StepLimitReached(Box<CpfTrace>),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("grid validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
