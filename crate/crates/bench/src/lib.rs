//! Deterministic inputs shared by the benchmarks.

use biconvmf::corpus::{EmbeddingTable, TokenDocument};
use biconvmf::factorize::{init_factors, LatentFactors, SparseRatings};
use biconvmf::linalg::DenseMatrix;
use biconvmf::synthetic::{generate, SyntheticConfig};
use biconvmf::textcnn::{CnnConfig, CnnParams};
use biconvmf::{CorpusBundle, CorpusConfig, SplitSpec};

/// `A = BᵀB + I` for a fixed pseudo-random `B`, so `A` is positive definite.
pub fn spd_matrix(k: usize) -> DenseMatrix {
    let b: Vec<f64> = (0..k * k)
        .map(|i| ((i * 7919 % 1000) as f64 / 500.0) - 1.0)
        .collect();
    let mut a = DenseMatrix::identity(k);
    for r in 0..k {
        for c in 0..k {
            a[(r, c)] += (0..k).map(|t| b[t * k + r] * b[t * k + c]).sum::<f64>();
        }
    }
    a
}

/// A network with the default architecture and a document of `true_len` tokens.
pub fn cnn_case(
    embedding_dim: usize,
    max_len: usize,
    true_len: usize,
) -> (CnnParams, TokenDocument) {
    let vocab = 8000;
    let config = CnnConfig {
        embedding_dim,
        max_len,
        ..CnnConfig::default()
    };
    let table = EmbeddingTable::random(vocab, embedding_dim, 0.25, 1);
    let params = CnnParams::init(config, table, true, 2).expect("valid default architecture");
    let mut indices: Vec<u32> = (0..true_len)
        .map(|t| (t * 131 % vocab + 1) as u32)
        .collect();
    indices.resize(max_len, 0);
    (params, TokenDocument { indices, true_len })
}

/// Training ratings of a synthetic corpus and initial factors of rank `k`.
pub fn rating_case(n_ratings: usize, k: usize) -> (SparseRatings, LatentFactors) {
    let records = generate(&SyntheticConfig {
        n_users: n_ratings / 2,
        n_items: n_ratings / 60,
        n_ratings,
        ..Default::default()
    });
    let bundle = CorpusBundle::build(&records, &CorpusConfig::default(), &SplitSpec::new(0.2, 0))
        .expect("synthetic corpus builds");
    let factors = init_factors(bundle.n_users(), bundle.n_items(), k, 0).expect("k is positive");
    (bundle.train_ratings(), factors)
}
