use diiv_core::DiivError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ESTIMATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] DiivError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Csv(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config: missing key `{0}`")]
    MissingKey(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_input_error() => EXIT_ESTIMATION,
            _ => EXIT_INPUT,
        }
    }

    /// Tag written to the report's `error_kind` field.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "Io",
            CliError::Csv(_) => "Csv",
            CliError::Config { .. } | CliError::MissingKey(_) => "Config",
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
