use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] gpc_sense::Error),
}

impl CliError {
    /// 3 for evaluator failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(gpc_sense::Error::Evaluator { .. }) => 3,
            _ => 2,
        }
    }
}
