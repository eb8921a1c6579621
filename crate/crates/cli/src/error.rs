use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad manifest, flags, paths or input files.
    #[error("{0}")]
    Config(String),
    /// A run or fit broke a numerical consistency check.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<levywalk::Error> for CliError {
    fn from(e: levywalk::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a path to an I/O error.
pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{}: {e}", path.display()))
}
