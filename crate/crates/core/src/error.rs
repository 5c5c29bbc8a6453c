use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular design: column {column} is linearly dependent on earlier columns")]
    Singular { column: usize },

    #[error("rank-deficient design in {context}: column `{name}` is collinear with earlier columns")]
    Collinear { context: String, name: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse { line: usize, column: String, message: String },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("probit did not converge after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64, last_iterate: Vec<f64> },

    #[error("separation detected: fitted probabilities reach 0 or 1 ({n_extreme} rows)")]
    Separation { n_extreme: usize },

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bootstrap failed: {failed} of {total} replicates errored")]
    Inference { failed: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config syntax error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Singular { .. } | Error::Collinear { .. } => "rank_deficient",
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::NonFinite(_) => "non_finite",
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::EmptySample(_) => "empty_sample",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Separation { .. } => "separation",
            Error::DegenerateResponse(_) => "degenerate_response",
            Error::Config(_) | Error::Toml(_) => "config",
            Error::Inference { .. } => "inference",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
