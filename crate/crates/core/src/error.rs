use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rounding bin {0} does not exist (expected 0..=5)")]
    InvalidBin(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{found} observations supplied, at least {required} are needed")]
    TooFewObservations { found: usize, required: usize },

    #[error("uninformative data: every observation is censored at the threshold")]
    Uninformative,

    #[error("numerical failure after {} iterations: {message}", trace.len())]
    NumericalFailure { message: String, trace: Vec<f64> },

    #[error("bootstrap skipped {skipped} of {total} resamples (more than 10%)")]
    BootstrapSkips { skipped: usize, total: usize },

    #[error("no stratum has at least {min_size} observations")]
    AllStrataUndersized { min_size: usize },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate inputs: {0}")]
    Degenerate(String),

    #[error("missing predictor values for (journal, year): {}", format_pairs(.0))]
    MissingPredictor(Vec<(String, i32)>),

    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_pairs(pairs: &[(String, i32)]) -> String {
    pairs
        .iter()
        .map(|(j, y)| format!("({j}, {y})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain { name, value, domain }
    }

    /// True for failures of the numerical machinery rather than of the data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure { .. } | Error::NotPositiveDefinite(_) | Error::BootstrapSkips { .. }
        )
    }
}
