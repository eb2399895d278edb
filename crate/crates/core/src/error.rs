use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent block sizes or shapes.
    #[error("structural error: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    /// A named block that must be invertible is not.
    #[error("block {block} is not invertible (sigma_min/sigma_max = {ratio:e})")]
    NotInvertible { block: String, ratio: f64 },

    /// The shifted pencil sE - A is singular or numerically so at this shift.
    #[error("shift {re}{im:+}i is (numerically) a pole of the pencil")]
    ShiftSingular { re: f64, im: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("no convergence: {0}")]
    NotConverged(String),

    #[error("eigen solver failed: {0}")]
    Eigen(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category used by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "structural",
            Error::Singular(_) => "singular",
            Error::NotInvertible { .. } => "not_invertible",
            Error::ShiftSingular { .. } => "shift_singular",
            Error::Consistency(_) => "consistency",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidInput(_) => "invalid_input",
            Error::Unsupported(_) => "unsupported",
            Error::NotConverged(_) => "not_converged",
            Error::Eigen(_) => "eigen",
            Error::Stage { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Json(_) => "json",
        }
    }

    /// Innermost error below any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage_name(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage, source: Box::new(e) })
    }
}
