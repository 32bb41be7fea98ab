//! Review ingestion: raw records, per-user and per-item review sets, the
//! vocabulary, fixed-length token documents and word embeddings.

mod bundle;
mod embedding;
mod review_set;
mod reviews;
mod vocab;

use thiserror::Error;

pub use bundle::{CorpusBundle, CorpusConfig, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use embedding::{
    load_pretrained_embeddings, read_pretrained_embeddings, EmbeddingTable, MISSING_WORD_RANGE,
    RANDOM_INIT_RANGE,
};
pub use review_set::{build_review_sets, ReviewSet, ReviewSets};
pub use reviews::{
    parse_reviews, read_first_n, take_first_n, DatasetStats, OnMalformed, ReviewReader,
    ReviewRecord,
};
pub use vocab::{build_vocabulary, tensorize, tokenize, TokenDocument, Vocabulary};

use crate::codec::CodecError;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid corpus configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding dimension mismatch at line {line}: expected {expected}, found {found}")]
    EmbeddingDimension {
        expected: usize,
        found: usize,
        line: usize,
    },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}
