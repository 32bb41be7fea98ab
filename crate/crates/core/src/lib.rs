//! Rating prediction by probabilistic matrix factorization with text-CNN
//! priors learned from review sets.
//!
//! Users and items get `k`-dimensional latent vectors whose dot product
//! predicts a rating. In BiConvMF each user's vector is pulled toward
//! `cnn(W_U, X_i)`, the output of a CNN over everything the user wrote, and
//! each item's toward `cnn(W_V, X_j)`, a second CNN over every review the
//! item received. The factors are solved in closed form row by row; the two
//! CNNs are refit by backpropagation between sweeps.
//!
//! The same machinery covers the baselines: PMF (no CNN, zero-mean priors)
//! and ConvMF (item CNN only). BiConvMF+ starts both embedding layers from
//! pretrained word vectors.
//!
//! Module map:
//! - [`corpus`]: review parsing, review sets, vocabulary, token documents
//! - [`linalg`]: Gram accumulation and Cholesky solves
//! - [`textcnn`]: the convolutional encoder and its training loop
//! - [`factorize`]: coordinate descent, trained models, checkpoints
//! - [`eval`]: splits, RMSE, repeated-run comparisons
//! - [`synthetic`]: seeded toy corpora for tests and smoke runs

pub mod codec;
pub mod corpus;
pub mod eval;
pub mod factorize;
pub mod linalg;
pub mod synthetic;
pub mod textcnn;

pub use corpus::{CorpusBundle, CorpusConfig, ReviewRecord, TokenDocument, Vocabulary};
pub use eval::{rmse, run_experiment, ExperimentOptions, ExperimentReport, SplitSpec};
pub use factorize::{train, Hyperparams, LatentFactors, ModelKind, SparseRatings, TrainedModel};
pub use textcnn::{CnnConfig, CnnParams, FitConfig};
