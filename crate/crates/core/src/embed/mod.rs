//! Entity embeddings: vocabulary, co-occurrence training and distance queries.

mod space;
mod train;
mod vocab;

pub use space::{load_tsv, parse_tsv, EmbeddingSpace, Metric};
pub use train::{
    batch_loss, export_tsv, forward, loss_and_gradient, train, Adam, EmbeddingTable, PairSampler, PairType,
    TrainConfig, TrainReport, TrainSample, NEGATIVE_RETRIES,
};
pub use vocab::{build_vocabulary, EntityKind, Vocabulary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown situation: no embedding for state `{0}`")]
    UnknownSituation(String),
    #[error("entity `{0}` has a zero vector")]
    ZeroNorm(String),
    #[error("{file} file, line {line}: {message}")]
    Format {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("vectors file has {vectors} rows but metadata lists {metadata} entities")]
    Mismatch { vectors: usize, metadata: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
