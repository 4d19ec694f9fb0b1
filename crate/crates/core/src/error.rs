use thiserror::Error;

/// Configuration problems. Reported before any backend is contacted.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("budget order violated: need m_retrieve ({m_retrieve}) <= m_prefilter ({m_prefilter}) <= n_candidates ({n_candidates})")]
    BudgetOrderViolation {
        n_candidates: usize,
        m_prefilter: usize,
        m_retrieve: usize,
    },
    #[error("group count {groups} for stage `{stage}` exceeds its frame budget {budget}")]
    GroupCountTooLarge {
        stage: &'static str,
        groups: usize,
        budget: usize,
    },
    #[error("`{0}` must be positive")]
    NonPositive(&'static str),
    #[error("invalid config: {0}")]
    Parse(String),
}

/// Failures surfaced by model backends (HTTP or mock).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("frame `{content_ref}` unreadable: {reason}")]
    FrameUnreadable { content_ref: String, reason: String },
    #[error("prompt exceeds the model context ({0})")]
    ContextTooLong(String),
    #[error("neither yes nor no token present in the returned top tokens")]
    TokensAbsent,
    #[error("invalid request: {0}")]
    InvalidInput(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupingError {
    #[error("degenerate features: {0}")]
    DegenerateFeatures(String),
    #[error("group budget {budget} exceeds group size {size}")]
    BudgetExceedsGroup { budget: usize, size: usize },
    #[error("invalid grouping input: {0}")]
    InvalidInput(String),
}

/// Top-level error. Every variant maps to a stable `kind()` string used in run reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error("decomposition response unparseable")]
    Unparseable,
    #[error("relevance scoring degraded: {failed} of {total} frames failed")]
    ScoringDegraded { failed: usize, total: usize },
    #[error("no parseable answer in response")]
    AnswerMissing,
    #[error("multi-view QA failed: no round produced an answer")]
    QaFailed,
    #[error("missing cost profile `{0}`")]
    MissingProfile(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("run report incomplete: {0}")]
    IncompleteReport(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name of the error.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(ConfigError::BudgetOrderViolation { .. }) => "BudgetOrderViolation",
            Error::Config(ConfigError::GroupCountTooLarge { .. }) => "GroupCountTooLarge",
            Error::Config(ConfigError::NonPositive(_)) => "NonPositive",
            Error::Config(ConfigError::Parse(_)) => "ConfigParse",
            Error::Backend(BackendError::Unavailable(_)) => "BackendUnavailable",
            Error::Backend(BackendError::DimensionMismatch { .. }) => "DimensionMismatch",
            Error::Backend(BackendError::FrameUnreadable { .. }) => "FrameUnreadable",
            Error::Backend(BackendError::ContextTooLong(_)) => "ContextTooLong",
            Error::Backend(BackendError::TokensAbsent) => "TokensAbsent",
            Error::Backend(BackendError::InvalidInput(_)) => "InvalidInput",
            Error::Backend(BackendError::Protocol(_)) => "Protocol",
            Error::Grouping(GroupingError::DegenerateFeatures(_)) => "DegenerateFeatures",
            Error::Grouping(GroupingError::BudgetExceedsGroup { .. }) => "BudgetExceedsGroup",
            Error::Grouping(GroupingError::InvalidInput(_)) => "InvalidGroupingInput",
            Error::Unparseable => "Unparseable",
            Error::ScoringDegraded { .. } => "ScoringDegraded",
            Error::AnswerMissing => "AnswerMissing",
            Error::QaFailed => "QAFailed",
            Error::MissingProfile(_) => "MissingProfile",
            Error::EmptyDataset => "EmptyDataset",
            Error::IncompleteReport(_) => "IncompleteReport",
            Error::Data(_) => "DataError",
            Error::Precondition(_) => "Precondition",
            Error::Io(_) => "Io",
        }
    }

    /// Coarse class used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::MissingProfile(_) => ErrorClass::Config,
            Error::Backend(_) | Error::ScoringDegraded { .. } | Error::QaFailed => {
                ErrorClass::Backend
            }
            _ => ErrorClass::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Config,
    Backend,
    Data,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
