use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A serialized file (model, lexicon, registry, constraints, corpus)
    /// failed validation: bad magic, unsupported version, truncation,
    /// malformed line, and so on.
    #[error("invalid {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("unknown language code `{code}`{}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownLanguage { code: String, line: Option<usize> },

    /// An input collection that must be non-empty was empty.
    #[error("empty {0}")]
    Empty(&'static str),

    /// The caller violated an API precondition (out-of-range position,
    /// feature index beyond the group's vocabulary, invalid penalty, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at update {step}; lower the learning rate")]
    NonFiniteLoss { step: u64 },
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { what, detail: detail.into() }
    }

    pub(crate) fn arg(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }

    /// True when the error was caused by user-supplied data or files rather
    /// than by a bug in the calling code. The CLI maps data errors to exit
    /// code 2 and everything else to 3.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Format { .. } | Error::UnknownLanguage { .. } | Error::Empty(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
