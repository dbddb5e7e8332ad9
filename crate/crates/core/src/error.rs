use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("document `{0}` is not present in the tf-idf table")]
    UnknownDocument(String),

    #[error("sentiment features are enabled but no lexicon was supplied")]
    MissingLexicon,

    #[error("pruning removed every node ({news} news, {elements} elements before pruning)")]
    EmptyGraph { news: usize, elements: usize },

    #[error("node `{0}` has no neighbours")]
    IsolatedNode(String),

    #[error("news node `{0}` has an empty feature bag")]
    EmptyFeatureBag(String),

    #[error("none of the {0} features is in the embedding vocabulary")]
    AllOutOfVocabulary(usize),

    #[error("non-finite value during {stage}: {detail}")]
    NonFinite { stage: &'static str, detail: String },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("optimizer failed on every start; best log-likelihood {best_loglik}")]
    NoConvergence { best_loglik: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("dates are not aligned; unmatched: {0:?}")]
    DateGaps(Vec<String>),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}
