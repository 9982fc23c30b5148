//! Crate-wide error type.

use thiserror::Error;

/// A single violated constraint, reported when a local MPC problem turns out
/// infeasible. Carries the violation of the plugged-in reference candidate so
/// parameter misconfiguration (omega / theta / epsilon) can be debugged.
#[derive(Debug, Clone)]
pub struct ConstraintViolation {
    pub constraint: String,
    pub violation: f64,
}

impl std::fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} violated by {:.3e}", self.constraint, self.violation)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("excitation error: node {node}: stacked input/neighbour-output data not persistently exciting of order {order} after {attempts} attempts")]
    Excitation {
        node: usize,
        order: usize,
        attempts: usize,
    },

    #[error("inconsistent initialization: data-driven simulation residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    InconsistentInitialization { residual: f64, tol: f64 },

    #[error("terminal synthesis infeasible for node {node}: {detail}")]
    SynthesisInfeasible { node: usize, detail: String },

    #[error("weak-coupling violation: {0}")]
    WeakCoupling(String),

    #[error("terminal-design violation: {0}")]
    TerminalDesign(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("agent {agent} infeasible at step {step}: reference candidate violations: {}",
            .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InfeasibleMpc {
        agent: usize,
        step: i64,
        violations: Vec<ConstraintViolation>,
    },

    #[error("bootstrap error: {0}")]
    Bootstrap(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("file format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
