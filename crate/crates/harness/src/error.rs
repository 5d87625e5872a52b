use std::path::PathBuf;

use markov_lsa::ErrorCategory;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{}: {message}", location(path, *line))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{operation}: {source}")]
    Numerical {
        operation: String,
        #[source]
        source: markov_lsa::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn location(path: &std::path::Path, line: Option<usize>) -> String {
    match line {
        Some(l) => format!("{}:{l}", path.display()),
        None => path.display().to_string(),
    }
}

impl HarnessError {
    pub fn config(path: impl Into<PathBuf>, line: Option<usize>, message: impl Into<String>) -> Self {
        HarnessError::Config {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }

    /// Machine-readable tag printed on failure.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config { .. } => "config",
            HarnessError::Io { .. } | HarnessError::Csv(_) => "io",
            HarnessError::Numerical { source, .. } => source.category().as_str(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Csv(_) => 3,
            HarnessError::Numerical { source, .. } => match source.category() {
                ErrorCategory::Input => 4,
                ErrorCategory::Ergodicity => 5,
                ErrorCategory::Numerical => 6,
                ErrorCategory::Data => 7,
            },
        }
    }
}

/// Attaches the name of the failing operation to a core error.
pub trait Context<T> {
    fn during(self, operation: &str) -> Result<T, HarnessError>;
}

impl<T> Context<T> for markov_lsa::Result<T> {
    fn during(self, operation: &str) -> Result<T, HarnessError> {
        self.map_err(|source| HarnessError::Numerical {
            operation: operation.to_string(),
            source,
        })
    }
}
