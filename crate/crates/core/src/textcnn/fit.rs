use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{accumulate_gradient, forward_activations};
use super::{CnnError, CnnGradients, CnnParams};
use crate::corpus::TokenDocument;

/// Mini-batch RMSprop settings for [`fit_to_targets`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Moving-average decay of the squared-gradient cache.
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 128,
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        if self.batch_size == 0 {
            return Err(CnnError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(CnnError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(CnnError::Config("decay must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(CnnError::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

struct RmsProp {
    cache: Vec<Vec<f64>>,
    lr: f64,
    decay: f64,
    eps: f64,
}

impl RmsProp {
    fn new(params: &CnnParams, cfg: &FitConfig) -> Self {
        Self {
            cache: params
                .trainable_blocks()
                .iter()
                .map(|b| vec![0.0; b.len()])
                .collect(),
            lr: cfg.learning_rate,
            decay: cfg.decay,
            eps: cfg.epsilon,
        }
    }

    fn step(&mut self, params: &mut CnnParams, grads: &CnnGradients) {
        let blocks = params.trainable_blocks_mut();
        for ((w, g), c) in blocks.into_iter().zip(grads.blocks()).zip(&mut self.cache) {
            for ((wi, &gi), ci) in w.iter_mut().zip(g).zip(c.iter_mut()) {
                *ci = self.decay * *ci + (1.0 - self.decay) * gi * gi;
                *wi -= self.lr * gi / (ci.sqrt() + self.eps);
            }
        }
    }
}

/// Mean over entities of `(λ/2)‖target − cnn(W, doc)‖²` plus
/// `(λ_W/2)‖W‖²`, with dropout off.
pub fn mean_loss(
    params: &CnnParams,
    docs: &[&TokenDocument],
    targets: &[f64],
    lambda: f64,
    lambda_w: f64,
) -> f64 {
    let k = params.config.output_dim;
    let data: f64 = docs
        .iter()
        .enumerate()
        .map(|(e, doc)| {
            let out = forward_activations(params, doc, None).output;
            let t = &targets[e * k..(e + 1) * k];
            out.iter()
                .zip(t)
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
        })
        .sum();
    let mean = if docs.is_empty() {
        0.0
    } else {
        data / docs.len() as f64
    };
    0.5 * lambda * mean + 0.5 * lambda_w * params.weight_norm_sq()
}

/// Inverted dropout: each feature kept with probability `1 - rate` and
/// scaled by `1 / (1 - rate)`.
fn draw_mask(rng: &mut impl Rng, n: usize, rate: f64, out: &mut Vec<f64>) {
    out.clear();
    if rate == 0.0 {
        out.resize(n, 1.0);
        return;
    }
    let keep = 1.0 / (1.0 - rate);
    out.extend((0..n).map(|_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }));
}

/// Trains `params` so that `cnn(W, docs[e])` approaches
/// `targets[e*k..(e+1)*k]`.
///
/// Runs `cfg.epochs` passes of shuffled mini-batch RMSprop with dropout on
/// the pooled features. If the final mean loss (dropout off) is worse than
/// the starting one, the starting parameters are restored. Returns the mean
/// loss of the kept parameters.
pub fn fit_to_targets(
    params: &mut CnnParams,
    docs: &[&TokenDocument],
    targets: &[f64],
    lambda: f64,
    lambda_w: f64,
    cfg: &FitConfig,
    seed: u64,
) -> Result<f64, CnnError> {
    cfg.validate()?;
    let k = params.config.output_dim;
    if targets.len() != docs.len() * k {
        return Err(CnnError::Shape(format!(
            "{} targets of dimension {k} expected, got {} values",
            docs.len(),
            targets.len()
        )));
    }
    let start_loss = mean_loss(params, docs, targets, lambda, lambda_w);
    if !start_loss.is_finite() {
        return Err(CnnError::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            learning_rate: cfg.learning_rate,
        });
    }
    if docs.is_empty() || cfg.epochs == 0 {
        return Ok(start_loss);
    }
    let start = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = RmsProp::new(params, cfg);
    let mut grads = CnnGradients::zeros_like(params);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut mask = Vec::new();
    let n_features = params.config.n_features();
    let rate = params.config.dropout_rate;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.fill_zero();
            let mut data = 0.0;
            for &e in batch {
                draw_mask(&mut rng, n_features, rate, &mut mask);
                data += accumulate_gradient(
                    params,
                    docs[e],
                    &targets[e * k..(e + 1) * k],
                    lambda,
                    Some(&mask),
                    &mut grads,
                );
            }
            let scale = 1.0 / batch.len() as f64;
            for b in grads.blocks_mut() {
                b.iter_mut().for_each(|g| *g *= scale);
            }
            grads.add_weight_decay(params, lambda_w);
            let batch_loss = data * scale + 0.5 * lambda_w * params.weight_norm_sq();
            if !batch_loss.is_finite() {
                return Err(CnnError::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    learning_rate: cfg.learning_rate,
                });
            }
            opt.step(params, &grads);
        }
        log::debug!("cnn fit epoch {epoch} done");
    }

    let end_loss = mean_loss(params, docs, targets, lambda, lambda_w);
    if !end_loss.is_finite() {
        return Err(CnnError::NonFiniteLoss {
            epoch: cfg.epochs,
            batch: 0,
            learning_rate: cfg.learning_rate,
        });
    }
    if end_loss <= start_loss {
        Ok(end_loss)
    } else {
        *params = start;
        Ok(start_loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EmbeddingTable;
    use crate::textcnn::{forward, CnnConfig};

    fn setup(seed: u64) -> (CnnParams, Vec<TokenDocument>) {
        let cfg = CnnConfig {
            window_sizes: vec![2, 3],
            n_filters: 4,
            embedding_dim: 3,
            output_dim: 2,
            dropout_rate: 0.2,
            max_len: 6,
        };
        let params =
            CnnParams::init(cfg, EmbeddingTable::random(6, 3, 0.1, seed), true, seed).unwrap();
        let docs = vec![
            TokenDocument {
                indices: vec![1, 2, 3, 0, 0, 0],
                true_len: 3,
            },
            TokenDocument {
                indices: vec![4, 5, 6, 1, 2, 0],
                true_len: 5,
            },
            TokenDocument {
                indices: vec![6, 0, 0, 0, 0, 0],
                true_len: 1,
            },
        ];
        (params, docs)
    }

    #[test]
    fn already_fitted_stays_put() {
        let (mut params, docs) = setup(1);
        let refs: Vec<&TokenDocument> = docs.iter().collect();
        let targets: Vec<f64> = docs.iter().flat_map(|d| forward(&params, d)).collect();
        let before = params.clone();
        let loss = fit_to_targets(
            &mut params,
            &refs,
            &targets,
            1.0,
            0.0,
            &FitConfig::default(),
            3,
        )
        .unwrap();
        assert!(loss <= 1e-12, "{loss}");
        assert_eq!(params, before);
    }

    #[test]
    fn single_entity_loss_decreases() {
        let cfg = CnnConfig {
            window_sizes: vec![1],
            n_filters: 3,
            embedding_dim: 2,
            output_dim: 1,
            dropout_rate: 0.0,
            max_len: 4,
        };
        let mut params =
            CnnParams::init(cfg, EmbeddingTable::random(3, 2, 0.1, 5), true, 5).unwrap();
        let doc = TokenDocument {
            indices: vec![1, 2, 3, 0],
            true_len: 3,
        };
        let targets = [2.0];
        let start = mean_loss(&params, &[&doc], &targets, 1.0, 0.0);
        let fit = FitConfig {
            epochs: 50,
            ..Default::default()
        };
        let end = fit_to_targets(&mut params, &[&doc], &targets, 1.0, 0.0, &fit, 0).unwrap();
        assert!(end < start, "{end} !< {start}");
    }

    #[test]
    fn deterministic_per_seed() {
        let run = || {
            let (mut params, docs) = setup(2);
            let refs: Vec<&TokenDocument> = docs.iter().collect();
            let targets = vec![0.5, -0.5, 1.0, 0.0, -1.0, 0.25];
            let fit = FitConfig {
                batch_size: 2,
                epochs: 3,
                ..Default::default()
            };
            fit_to_targets(&mut params, &refs, &targets, 100.0, 1e-4, &fit, 17).unwrap();
            params
        };
        let (a, b) = (run(), run());
        let bits = |p: &CnnParams| {
            p.trainable_blocks()
                .iter()
                .flat_map(|b| b.iter().map(|x| x.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rejects_misaligned_targets() {
        let (mut params, docs) = setup(3);
        let refs: Vec<&TokenDocument> = docs.iter().collect();
        let err = fit_to_targets(
            &mut params,
            &refs,
            &[0.0; 5],
            1.0,
            0.0,
            &FitConfig::default(),
            0,
        );
        assert!(matches!(err, Err(CnnError::Shape(_))));
    }

    #[test]
    fn non_finite_aborts() {
        let (mut params, docs) = setup(4);
        let refs: Vec<&TokenDocument> = docs.iter().collect();
        let targets = vec![f64::NAN; 6];
        let err = fit_to_targets(
            &mut params,
            &refs,
            &targets,
            1.0,
            0.0,
            &FitConfig::default(),
            0,
        );
        assert!(matches!(err, Err(CnnError::NonFiniteLoss { .. })));
    }
}
