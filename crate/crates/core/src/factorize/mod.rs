//! Alternating MAP estimation of the user and item latent factors with
//! review-CNN priors: PMF, ConvMF, BiConvMF and BiConvMF+.

mod model;
mod ratings;
mod train;
mod updates;

use thiserror::Error;

pub use model::{TrainedModel, MODEL_MAGIC, MODEL_VERSION};
pub use ratings::{Entry, Rating, SparseRatings};
pub use train::{
    coordinate_descent, derive_seed, train, CnnSettings, FixedTargets, Hyperparams, IterationStats,
    LatentEncoder, ModelKind, Side, TextCnn, TrainingLog,
};
pub use updates::{
    init_factors, total_loss, update_item_factors, update_user_factors, Lambdas, LatentFactors,
};

use crate::codec::CodecError;
use crate::linalg::LinalgError;
use crate::textcnn::CnnError;

#[derive(Debug, Error)]
pub enum FactorizeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error("non-finite objective at outer iteration {iteration}: {stats}")]
    NonFiniteLoss { iteration: usize, stats: String },
    #[error("model has not been trained")]
    Untrained,
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}
