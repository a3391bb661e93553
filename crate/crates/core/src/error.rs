use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("solver exceeded max_steps={max_steps}; last time reached t={t}")]
    NonConvergence { t: f64, max_steps: usize },

    #[error("solver state diverged at t={t}")]
    Divergence { t: f64 },

    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("stage `{stage}` failed (seed {seed}, config {config_hash}): {source}")]
    Stage {
        stage: &'static str,
        seed: u64,
        config_hash: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Attaches the index of the sample being processed.
    pub fn in_sample(self, sample: usize) -> Self {
        match self {
            e @ Error::Sample { .. } => e,
            e => Error::Sample { sample, source: Box::new(e) },
        }
    }
}
