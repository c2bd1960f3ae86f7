use std::path::PathBuf;

use thiserror::Error;

fn location(line: usize) -> String {
    match line {
        0 => "command-line override".into(),
        n => format!("line {n}"),
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key '{key}' ({})", location(*.line))]
    UnknownKey { key: String, line: usize },

    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },

    #[error("bad value '{value}' for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },

    #[error("missing required key {0}")]
    Missing(String),

    #[error("{0}")]
    Invalid(String),

    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Core(#[from] amto_core::Error),

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for anything the user can fix in the spec or arguments, 1 for
    /// failures during execution.
    pub fn exit_code(&self) -> i32 {
        use amto_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(E::InvalidConfig(_) | E::InvalidSpec(_) | E::InvalidOptimizer(_)) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
