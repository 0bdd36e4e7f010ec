use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of a model function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible equilibrium: {0}")]
    InfeasibleEquilibrium(String),

    #[error("class ordering violated: class 1 must be faster (v1* = {v1}, v2* = {v2})")]
    ClassOrdering { v1: f64, v2: f64 },

    #[error("equilibrium not congested: {0}")]
    NotCongested(String),

    #[error("degenerate characteristic speeds {0:?}: eigenbasis not constructed")]
    Degenerate([f64; 4]),

    #[error("input scaling kappa = {0:e} vanishes")]
    VanishingKappa(f64),

    #[error("ill-posed boundary conditions: {0}")]
    IllPosedBoundary(String),

    #[error("kernel iteration did not converge after {iterations} sweeps (last increment {increment:e})")]
    KernelNonConvergence { iterations: usize, increment: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("CFL violation: Courant number {courant} exceeds 1")]
    Cfl { courant: f64 },

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid simulation setting: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Validation problems (bad input) as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidParameter(_)
                | Error::InfeasibleEquilibrium(_)
                | Error::ClassOrdering { .. }
                | Error::NotCongested(_)
                | Error::Degenerate(_)
                | Error::InvalidConfig(_)
                | Error::Parse { .. }
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::VanishingKappa(_)
                | Error::IllPosedBoundary(_)
                | Error::KernelNonConvergence { .. }
                | Error::GridTooCoarse(_)
                | Error::Cfl { .. }
                | Error::ShapeMismatch { .. }
        )
    }
}
