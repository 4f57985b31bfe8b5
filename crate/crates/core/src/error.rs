use thiserror::Error;

use crate::dd_solver::IterationReport;
use crate::timestepper::AdmissibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Config-file error tied to a source line (1-based).
    #[error("configuration error at line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("cannot certify `{family}` curve: {reason}")]
    Certification { family: String, reason: String },

    #[error("assembly produced a non-finite entry at dof {dof}: {what}")]
    Assembly { dof: usize, what: String },

    #[error("linear solver failed for {phase} phase on subdomain {subdomain} after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver {
        phase: &'static str,
        subdomain: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("parameter condition 1/L_S - sum 1/(2L) = {value} <= 0 on layer {layer}; increase L")]
    NoAdmissibleStep { layer: usize, value: f64 },

    #[error("scheme parameters are not admissible: {}", .0.summary())]
    Admissibility(Box<AdmissibilityReport>),

    #[error("L-scheme did not converge within {} iterations", .report.iterations_used)]
    NonConvergence { report: Box<IterationReport> },

    #[error("L-scheme iterates became non-finite at iteration {}", .report.iterations_used)]
    Diverged { report: Box<IterationReport> },

    #[error("reference solver failed: {0}")]
    Oracle(String),

    #[error("unknown manufactured case `{0}`")]
    Catalog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Iteration report carried by a failed L-scheme step, if any.
    pub fn report(&self) -> Option<&IterationReport> {
        match self {
            Error::NonConvergence { report } | Error::Diverged { report } => Some(report),
            _ => None,
        }
    }
}
