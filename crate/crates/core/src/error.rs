use thiserror::Error;

/// Errors produced by the models, optimizers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// The physical configuration cannot host a valid antenna layout.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested harvested-power threshold cannot be met.
    #[error(
        "energy threshold {required_w:.6e} W is infeasible (best achievable min-energy {achievable_w:.6e} W)"
    )]
    InfeasibleEnergy { required_w: f64, achievable_w: f64 },

    /// A resource-allocation linear program has no feasible point.
    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),

    /// A NOMA decoding order disagrees with the channel-gain ordering.
    #[error("decoding order inconsistent with channel gains: {0}")]
    OrderViolation(String),

    /// An instance exceeds a hard size bound (factorial search, brute-force grids).
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// A configuration file could not be parsed or validated.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
