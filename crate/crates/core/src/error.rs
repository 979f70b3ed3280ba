use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("singular interior block during network reduction at bus {bus} (pivot {pivot:e})")]
    SingularPivot { bus: usize, pivot: f64 },

    #[error("simulation diverged at t = {time:.4} s (|df| exceeded nominal frequency)")]
    Divergence { time: f64 },

    #[error("trace too short: need {required} samples after onset (sampling window {window}), have {available}")]
    TraceTooShort {
        window: usize,
        required: usize,
        available: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected feature length {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("optimizer did not converge after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("no model stored for {0}")]
    Lookup(String),

    #[error("{missing} generators missing but the bank only covers up to {k_max}")]
    BudgetExceeded { missing: usize, k_max: usize },

    #[error("parse error in {file} line {line}: {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn with_context<F: FnOnce() -> String>(self, f: F) -> Result<T>;

    fn context(self, context: &str) -> Result<T>
    where
        Self: Sized,
    {
        self.with_context(|| context.to_string())
    }
}

impl<T> ResultExt<T> for Result<T> {
    fn with_context<F: FnOnce() -> String>(self, f: F) -> Result<T> {
        self.map_err(|e| e.context(f()))
    }
}
