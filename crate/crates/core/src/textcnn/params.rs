use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CnnConfig, CnnError};
use crate::codec::{self, SectionReader, SectionWriter};
use crate::corpus::EmbeddingTable;

/// One convolution width: `n_filters` filters of shape `width × p`, stored
/// row-major as `n_filters × (width * p)`, plus a bias per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub width: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Weights of the text CNN: embedding, convolution banks, and the linear
/// projection from pooled features (`n_features × k`, row-major) to the
/// latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub config: CnnConfig,
    pub embedding: EmbeddingTable,
    pub train_embedding: bool,
    pub banks: Vec<FilterBank>,
    pub projection: Vec<f64>,
    pub projection_bias: Vec<f64>,
}

fn glorot(fan_in: usize, fan_out: usize) -> Uniform<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Uniform::new(-limit, limit).expect("positive limit")
}

impl CnnParams {
    /// Seeded Glorot-uniform filters and projection, zero biases.
    pub fn init(
        config: CnnConfig,
        embedding: EmbeddingTable,
        train_embedding: bool,
        seed: u64,
    ) -> Result<Self, CnnError> {
        config.validate()?;
        if embedding.dim() != config.embedding_dim {
            return Err(CnnError::Config(format!(
                "embedding table has dimension {}, config expects {}",
                embedding.dim(),
                config.embedding_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = config.embedding_dim;
        let banks = config
            .window_sizes
            .iter()
            .map(|&w| {
                let dist = glorot(w * p, config.n_filters);
                FilterBank {
                    width: w,
                    weights: (0..config.n_filters * w * p)
                        .map(|_| dist.sample(&mut rng))
                        .collect(),
                    bias: vec![0.0; config.n_filters],
                }
            })
            .collect();
        let nf = config.n_features();
        let dist = glorot(nf, config.output_dim);
        let projection = (0..nf * config.output_dim)
            .map(|_| dist.sample(&mut rng))
            .collect();
        Ok(Self {
            projection_bias: vec![0.0; config.output_dim],
            config,
            embedding,
            train_embedding,
            banks,
            projection,
        })
    }

    /// All-zero weights; forward returns the zero vector for every document.
    pub fn zeros(config: CnnConfig, n_vocab_rows: usize) -> Result<Self, CnnError> {
        config.validate()?;
        let p = config.embedding_dim;
        let banks = config
            .window_sizes
            .iter()
            .map(|&w| FilterBank {
                width: w,
                weights: vec![0.0; config.n_filters * w * p],
                bias: vec![0.0; config.n_filters],
            })
            .collect();
        Ok(Self {
            embedding: EmbeddingTable::zeros(n_vocab_rows, p),
            train_embedding: false,
            banks,
            projection: vec![0.0; config.n_features() * config.output_dim],
            projection_bias: vec![0.0; config.output_dim],
            config,
        })
    }

    /// Squared L2 norm of the regularized weights: filters, projection and,
    /// when trainable, the embedding. Biases are excluded.
    pub fn weight_norm_sq(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let mut total: f64 = self.banks.iter().map(|b| sq(&b.weights)).sum();
        total += sq(&self.projection);
        if self.train_embedding {
            total += sq(self.embedding.as_slice());
        }
        total
    }

    /// Trainable parameter blocks, in the same order as
    /// [`CnnGradients::blocks`].
    pub(crate) fn trainable_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if self.train_embedding {
            out.push(self.embedding.as_mut_slice());
        }
        for b in &mut self.banks {
            out.push(&mut b.weights);
            out.push(&mut b.bias);
        }
        out.push(&mut self.projection);
        out.push(&mut self.projection_bias);
        out
    }

    pub(crate) fn trainable_blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if self.train_embedding {
            out.push(self.embedding.as_slice());
        }
        for b in &self.banks {
            out.push(&b.weights);
            out.push(&b.bias);
        }
        out.push(&self.projection);
        out.push(&self.projection_bias);
        out
    }

    /// Flags which of the trainable blocks carry weight decay.
    pub(crate) fn decayed_blocks(&self) -> Vec<bool> {
        let mut out = Vec::new();
        if self.train_embedding {
            out.push(true);
        }
        for _ in &self.banks {
            out.push(true);
            out.push(false);
        }
        out.push(true);
        out.push(false);
        out
    }

    pub fn is_finite(&self) -> bool {
        let fin = |v: &[f64]| v.iter().all(|x| x.is_finite());
        fin(self.embedding.as_slice())
            && self.banks.iter().all(|b| fin(&b.weights) && fin(&b.bias))
            && fin(&self.projection)
            && fin(&self.projection_bias)
    }

    pub fn encode(&self, s: &mut SectionWriter) {
        s.str(&serde_json::to_string(&self.config).expect("config serializes"));
        s.u8(self.train_embedding as u8);
        s.u64(self.embedding.dim() as u64);
        s.f64s(self.embedding.as_slice());
        for b in &self.banks {
            s.u64(b.width as u64).f64s(&b.weights).f64s(&b.bias);
        }
        s.f64s(&self.projection).f64s(&self.projection_bias);
    }

    pub fn decode(s: &mut SectionReader<'_>) -> codec::Result<Self> {
        let config: CnnConfig =
            serde_json::from_str(&s.str()?).map_err(|e| s.corrupt(e.to_string()))?;
        config.validate().map_err(|e| s.corrupt(e.to_string()))?;
        let train_embedding = s.u8()? != 0;
        let dim = s.u64()? as usize;
        let embedding =
            EmbeddingTable::from_flat(dim, s.f64s()?).map_err(|e| s.corrupt(e.to_string()))?;
        if dim != config.embedding_dim {
            return Err(s.corrupt("embedding dimension does not match config"));
        }
        let p = config.embedding_dim;
        let mut banks = Vec::with_capacity(config.window_sizes.len());
        for &w in &config.window_sizes {
            let width = s.u64()? as usize;
            let weights = s.f64s()?;
            let bias = s.f64s()?;
            if width != w
                || weights.len() != config.n_filters * w * p
                || bias.len() != config.n_filters
            {
                return Err(s.corrupt("filter bank shape does not match config"));
            }
            banks.push(FilterBank {
                width,
                weights,
                bias,
            });
        }
        let projection = s.f64s()?;
        let projection_bias = s.f64s()?;
        if projection.len() != config.n_features() * config.output_dim
            || projection_bias.len() != config.output_dim
        {
            return Err(s.corrupt("projection shape does not match config"));
        }
        Ok(Self {
            config,
            embedding,
            train_embedding,
            banks,
            projection,
            projection_bias,
        })
    }
}

/// Partial derivatives with the same layout as [`CnnParams`]. The embedding
/// block is empty when the embedding is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnGradients {
    pub embedding: Vec<f64>,
    pub banks: Vec<FilterBank>,
    pub projection: Vec<f64>,
    pub projection_bias: Vec<f64>,
}

impl CnnGradients {
    pub fn zeros_like(params: &CnnParams) -> Self {
        Self {
            embedding: if params.train_embedding {
                vec![0.0; params.embedding.as_slice().len()]
            } else {
                Vec::new()
            },
            banks: params
                .banks
                .iter()
                .map(|b| FilterBank {
                    width: b.width,
                    weights: vec![0.0; b.weights.len()],
                    bias: vec![0.0; b.bias.len()],
                })
                .collect(),
            projection: vec![0.0; params.projection.len()],
            projection_bias: vec![0.0; params.projection_bias.len()],
        }
    }

    pub(crate) fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if !self.embedding.is_empty() {
            out.push(&self.embedding);
        }
        for b in &self.banks {
            out.push(&b.weights);
            out.push(&b.bias);
        }
        out.push(&self.projection);
        out.push(&self.projection_bias);
        out
    }

    pub(crate) fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if !self.embedding.is_empty() {
            out.push(&mut self.embedding);
        }
        for b in &mut self.banks {
            out.push(&mut b.weights);
            out.push(&mut b.bias);
        }
        out.push(&mut self.projection);
        out.push(&mut self.projection_bias);
        out
    }

    pub(crate) fn fill_zero(&mut self) {
        for b in self.blocks_mut() {
            b.fill(0.0);
        }
    }

    /// Adds `λ_W · w` to every decayed block.
    pub(crate) fn add_weight_decay(&mut self, params: &CnnParams, lambda_w: f64) {
        if lambda_w == 0.0 {
            return;
        }
        let decayed = params.decayed_blocks();
        let blocks = params.trainable_blocks();
        for ((g, w), d) in self.blocks_mut().into_iter().zip(blocks).zip(decayed) {
            if d {
                crate::linalg::axpy(lambda_w, w, g);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
