//! Text CNN mapping a token document to a `k`-dimensional latent vector:
//! embedding lookup, parallel convolutions of several widths with `tanh`,
//! max-over-time pooling, and a linear projection.

mod fit;
mod network;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit_to_targets, mean_loss, FitConfig};
pub use network::{forward, gradient, pooled_features};
pub use params::{CnnGradients, CnnParams, FilterBank};

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("invalid cnn configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch} (learning rate {learning_rate})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub window_sizes: Vec<usize>,
    /// Filters per window size.
    pub n_filters: usize,
    pub embedding_dim: usize,
    /// Latent dimension `k`.
    pub output_dim: usize,
    /// Dropout on pooled features while fitting; never applied in `forward`.
    pub dropout_rate: f64,
    /// Length of every input document.
    pub max_len: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            window_sizes: vec![3, 4, 5],
            n_filters: 100,
            embedding_dim: 200,
            output_dim: 50,
            dropout_rate: 0.2,
            max_len: 300,
        }
    }
}

impl CnnConfig {
    /// Length of the pooled feature vector.
    pub fn n_features(&self) -> usize {
        self.window_sizes.len() * self.n_filters
    }

    pub fn max_window(&self) -> usize {
        self.window_sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        let bad = |m: &str| Err(CnnError::Config(m.to_string()));
        if self.window_sizes.is_empty() || self.window_sizes.contains(&0) {
            return bad("window sizes must be non-empty and positive");
        }
        if self.max_window() > self.max_len {
            return bad("every window size must be at most max_len");
        }
        if self.n_filters == 0 {
            return bad("n_filters must be at least 1");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be at least 1");
        }
        if self.output_dim == 0 {
            return bad("output_dim (k) must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }
}
