use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite coordinates, negative widths and similar out-of-domain inputs.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported region: {0}")]
    Unsupported(String),

    /// An input matrix violated a structural contract (e.g. it is not symmetric).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no finite exceptional point: {0}")]
    NoFiniteEp(String),

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    /// Branch assignment between two consecutive path points was ambiguous.
    #[error("path needs refinement between points {} and {}: {reason}", segment.0, segment.1)]
    Refinement {
        segment: (usize, usize),
        reason: String,
    },

    #[error("invalid loop: {0}")]
    InvalidLoop(String),

    #[error("singular coupling at (qx, qy) = ({qx}, {qy})")]
    Singularity { qx: f64, qy: f64 },

    #[error("ill-posed fit: {0}")]
    IllPosed(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("fit did not converge after {iterations} iterations (best sse {sse:e})")]
    NonConvergence {
        iterations: usize,
        sse: f64,
        best: Vec<f64>,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the command-line front end: 2 when the
    /// request itself is rejected, 3 when the numerics fail.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Domain(_)
            | Error::Unsupported(_)
            | Error::Contract(_)
            | Error::InvalidLoop(_) => 2,
            _ => 3,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Unsupported(_) => "unsupported",
            Error::Contract(_) => "contract",
            Error::NoFiniteEp(_) => "no_finite_ep",
            Error::DegenerateParameters(_) => "degenerate_parameters",
            Error::Refinement { .. } => "refinement",
            Error::InvalidLoop(_) => "invalid_loop",
            Error::Singularity { .. } => "singularity",
            Error::IllPosed(_) => "ill_posed",
            Error::RankDeficient(_) => "rank_deficient",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
