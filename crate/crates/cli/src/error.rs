use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file or flag combination; exit code 2.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] coalesce::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
