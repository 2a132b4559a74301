use thiserror::Error;

/// Errors raised anywhere in the planning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: &'static str, reason: String },

    #[error("singular matrix (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("innovation covariance near singular (condition estimate {cond:e})")]
    IllConditionedInnovation { cond: f64 },

    #[error("polynomial degree {degree} exceeds limit {limit}")]
    DegreeOverflow { degree: usize, limit: usize },

    #[error("eigenvalue solver failed on a degree-{degree} companion matrix")]
    EigenFailure { degree: usize },

    #[error("SDP backend failed: {0}")]
    Sdp(String),

    #[error("dinkelbach iteration failed: {0}")]
    Dinkelbach(String),

    #[error("empty interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("displacement {displacement} m unreachable in {slots} slots at {v_max} m/s")]
    Unreachable {
        displacement: f64,
        slots: usize,
        v_max: f64,
    },

    #[error("DP state space too large ({states} states)")]
    StateSpaceOverflow { states: u64 },

    #[error("mission infeasible: {0}")]
    MissionInfeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
