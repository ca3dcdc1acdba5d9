use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("missing files referenced by manifest: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFile(Vec<PathBuf>),

    #[error("document has {words} words, needs more than {needed}")]
    TooShort { words: usize, needed: usize },

    #[error("continuation for ({doc_id}, {config_id}) already stored")]
    DuplicateContinuation { doc_id: String, config_id: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("duplicate feature id {0}")]
    DuplicateFeatureId(String),

    #[error("empty token stream")]
    EmptyStream,

    #[error("feature matrix columns do not match model: missing {missing:?}")]
    ColumnMismatch { missing: Vec<String> },

    #[error("feature {0} required by the dimension model is missing")]
    MissingFeature(String),

    #[error("dimension {0} has no member features")]
    EmptyDimension(String),

    #[error("feature {feature} has non-positive standard deviation {sd}")]
    BadSd { feature: String, sd: f64 },

    #[error("scores come from different models or documents ({0})")]
    ModelMismatch(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("baseline standard error is zero on dimensions {0:?}")]
    ZeroBaseline(Vec<String>),

    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("chat config {0} needs a long system prompt file and an appended instruction")]
    MissingPromptFile(String),

    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("endpoint rejected credentials (HTTP {0})")]
    Auth(u16),

    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },

    #[error("scatter pair for chunk {0} has no counterpart")]
    UnpairedChunk(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
