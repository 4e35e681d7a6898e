use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("CDF error at record {record}: {msg}")]
    Cdf { record: usize, msg: String },

    #[error("power flow did not converge after {iterations} iterations (max mismatch {max_mismatch:.3e} p.u.)")]
    PowerFlowDiverged {
        iterations: usize,
        max_mismatch: f64,
    },

    #[error("singular Jacobian during power flow solve")]
    SingularJacobian,

    #[error("singular sensitivity at bus {bus}")]
    SingularSensitivity { bus: usize },

    #[error("zero-impedance branch {from}-{to}")]
    ZeroImpedanceBranch { from: usize, to: usize },

    #[error("unknown bus {0}")]
    UnknownBus(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
