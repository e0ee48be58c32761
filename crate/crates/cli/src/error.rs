use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] polylab_core::Error),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate record (seed {seed}, trial {trial})")]
    DuplicateRecord { seed: u64, trial: u64 },
    #[error("reports mix experiments `{0}` and `{1}`")]
    MixedExperiments(String, String),
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for precondition failures, 3 for numerical-contract violations, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                polylab_core::ErrorClass::Precondition => 2,
                polylab_core::ErrorClass::Numerical => 3,
            },
            CliError::Io { .. } => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
