use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient exceedances: found {found}, need at least {required}")]
    InsufficientExceedances { found: usize, required: usize },

    #[error("fit failure: {0}")]
    FitFailure(String),

    #[error("method inapplicable: {0}")]
    MethodInapplicable(String),

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("LRT search bracket too small: statistic {statistic:.4} at log2 r0 = {log2_r0} exceeds {critical}; raise the bracket cap")]
    BracketTooSmall {
        log2_r0: f64,
        statistic: f64,
        critical: f64,
    },

    #[error("internal consistency: {0}")]
    InternalConsistency(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
