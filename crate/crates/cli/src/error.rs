use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at line {line}, field `{field}`: {message}")]
    Config { line: usize, field: String, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(#[from] lcurve::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn config(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            line,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
