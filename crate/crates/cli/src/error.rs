use std::fmt;

/// Exit status 1: bad invocation or missing input file.
pub const EXIT_USAGE: u8 = 1;
/// Exit status 2: inputs present but rejected by a pipeline module.
pub const EXIT_DATA: u8 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { module: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data { .. } => EXIT_DATA,
        }
    }

    pub fn data(module: &'static str, message: impl fmt::Display) -> Self {
        CliError::Data { module, message: message.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data { module, message } => write!(f, "{module}: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Adapter for `map_err` that tags an error with the module that raised it.
pub fn in_module<E: fmt::Display>(module: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::data(module, e)
}
