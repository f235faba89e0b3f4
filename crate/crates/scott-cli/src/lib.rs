//! Library surface of the pipeline driver; the `scott` binary is a thin
//! argument-parsing shim over [`commands`].

pub mod commands;
pub mod config;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<scott::Error> for CliError {
    fn from(e: scott::Error) -> Self {
        use scott::Error::*;
        match &e {
            Config(_) | Format { .. } | Parse { .. } | Stratify(_) => {
                CliError::Usage(e.to_string())
            }
            Io(_) | Shape(_) | NonFinite(_) | Untrained(_) | Checkpoint(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}
