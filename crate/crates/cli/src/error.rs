use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Parse(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("uncertainty error: {0}")]
    Uncertainty(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Fit(_) => 4,
            CliError::Uncertainty(_) => 5,
        }
    }

    pub fn output(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<eventattr::Error> for CliError {
    fn from(e: eventattr::Error) -> Self {
        use eventattr::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::InvalidInput(_) => CliError::Config(msg),
            E::Parse { .. } | E::Validation(_) | E::Io(_) => CliError::Parse(msg),
            E::FitFailure(_) | E::InsufficientExceedances { .. } | E::Optimizer(_) => CliError::Fit(msg),
            E::MethodInapplicable(_) | E::BracketTooSmall { .. } | E::InternalConsistency(_) => {
                CliError::Uncertainty(msg)
            }
            E::Stage { .. } => unreachable!("root skips stage labels"),
        }
    }
}
