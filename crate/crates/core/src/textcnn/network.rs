//! Forward pass and backpropagation.
//!
//! Window rule: with `w_max` the widest filter, a document is convolved over
//! its first `L = max(true_len, w_max)` positions only, and every window of
//! width `w` lies fully inside `[0, L)`. `L` does not depend on how much
//! padding follows the text, so appending pad tokens never changes the
//! output. Windows that reach past `true_len` (only possible when the text
//! is shorter than `w_max`) see zero embedding rows there.

use super::{CnnGradients, CnnParams};
use crate::corpus::TokenDocument;

/// Intermediate values kept for the backward pass.
pub(crate) struct Activations {
    /// Embedded rows of the first `L` positions, `L × p`.
    embedded: Vec<f64>,
    /// Per pooled feature: window start of the max pre-activation.
    argmax: Vec<usize>,
    /// tanh of the pooled pre-activation (before dropout).
    pooled: Vec<f64>,
    pub(crate) output: Vec<f64>,
}

fn effective_len(params: &CnnParams, doc: &TokenDocument) -> usize {
    let w_max = params.config.max_window();
    doc.true_len.max(w_max).min(doc.indices.len())
}

pub(crate) fn forward_activations(
    params: &CnnParams,
    doc: &TokenDocument,
    mask: Option<&[f64]>,
) -> Activations {
    let cfg = &params.config;
    assert_eq!(
        doc.indices.len(),
        cfg.max_len,
        "document length must equal the configured max_len"
    );
    let p = cfg.embedding_dim;
    let len = effective_len(params, doc);
    let mut embedded = Vec::with_capacity(len * p);
    for &idx in &doc.indices[..len] {
        embedded.extend_from_slice(params.embedding.row(idx));
    }

    let nf = cfg.n_filters;
    let mut argmax = Vec::with_capacity(cfg.n_features());
    let mut pooled = Vec::with_capacity(cfg.n_features());
    let mut conv = Vec::new();
    for bank in &params.banks {
        let w = bank.width;
        let windows = len + 1 - w;
        let wp = w * p;
        conv.clear();
        conv.resize(windows * nf, 0.0);
        // conv[t, f] = <D[t .. t+w], filter_f>. Window t starts at row t of
        // the embedded matrix, so consecutive windows are rows of a strided
        // view with row stride p over the same buffer.
        unsafe {
            matrixmultiply::dgemm(
                windows,
                wp,
                nf,
                1.0,
                embedded.as_ptr(),
                p as isize,
                1,
                bank.weights.as_ptr(),
                1,
                wp as isize,
                0.0,
                conv.as_mut_ptr(),
                nf as isize,
                1,
            );
        }
        for f in 0..nf {
            let mut best_t = 0;
            let mut best = conv[f];
            for t in 1..windows {
                let v = conv[t * nf + f];
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            argmax.push(best_t);
            pooled.push((best + bank.bias[f]).tanh());
        }
    }

    let k = cfg.output_dim;
    let mut output = params.projection_bias.clone();
    for (f, &h) in pooled.iter().enumerate() {
        let h = match mask {
            Some(m) => h * m[f],
            None => h,
        };
        if h != 0.0 {
            crate::linalg::axpy(h, &params.projection[f * k..(f + 1) * k], &mut output);
        }
    }
    Activations {
        embedded,
        argmax,
        pooled,
        output,
    }
}

/// The latent vector `cnn(W, X)` for one document; dropout is off.
pub fn forward(params: &CnnParams, doc: &TokenDocument) -> Vec<f64> {
    forward_activations(params, doc, None).output
}

/// Max-pooled `tanh` features (before projection); each lies in (-1, 1).
pub fn pooled_features(params: &CnnParams, doc: &TokenDocument) -> Vec<f64> {
    forward_activations(params, doc, None).pooled
}

/// Adds `∂/∂W [(λ/2)‖target − cnn(W, doc)‖²]` into `grads` and returns the
/// data term. `mask` multiplies the pooled features (inverted dropout).
pub(crate) fn accumulate_gradient(
    params: &CnnParams,
    doc: &TokenDocument,
    target: &[f64],
    lambda: f64,
    mask: Option<&[f64]>,
    grads: &mut CnnGradients,
) -> f64 {
    let cfg = &params.config;
    let k = cfg.output_dim;
    assert_eq!(target.len(), k, "target length must equal k");
    let act = forward_activations(params, doc, mask);

    // d loss / d output
    let mut d_out = vec![0.0; k];
    let mut loss = 0.0;
    for j in 0..k {
        let e = act.output[j] - target[j];
        loss += e * e;
        d_out[j] = lambda * e;
    }
    loss *= 0.5 * lambda;

    crate::linalg::axpy(1.0, &d_out, &mut grads.projection_bias);
    let p = cfg.embedding_dim;
    let nf = cfg.n_filters;
    let train_embedding = params.train_embedding;
    for (bi, bank) in params.banks.iter().enumerate() {
        let w = bank.width;
        let wp = w * p;
        let gbank = &mut grads.banks[bi];
        for f in 0..nf {
            let feat = bi * nf + f;
            let m = mask.map_or(1.0, |m| m[feat]);
            let h = act.pooled[feat];
            let proj_row = &params.projection[feat * k..(feat + 1) * k];
            if m != 0.0 {
                crate::linalg::axpy(
                    h * m,
                    &d_out,
                    &mut grads.projection[feat * k..(feat + 1) * k],
                );
            }
            let d_pooled = m * crate::linalg::dot(proj_row, &d_out);
            let d_pre = d_pooled * (1.0 - h * h);
            if d_pre == 0.0 {
                continue;
            }
            gbank.bias[f] += d_pre;
            let t = act.argmax[feat];
            let window = &act.embedded[t * p..t * p + wp];
            crate::linalg::axpy(d_pre, window, &mut gbank.weights[f * wp..(f + 1) * wp]);
            if train_embedding {
                let filter = &bank.weights[f * wp..(f + 1) * wp];
                for r in 0..w {
                    let idx = doc.indices[t + r] as usize;
                    if idx == 0 {
                        continue;
                    }
                    crate::linalg::axpy(
                        d_pre,
                        &filter[r * p..(r + 1) * p],
                        &mut grads.embedding[idx * p..(idx + 1) * p],
                    );
                }
            }
        }
    }
    loss
}

/// Loss `(λ/2)‖target − cnn(W, doc)‖² + (λ_W/2)‖W‖²` and its exact
/// gradient, with `mask` (if any) applied to the pooled features.
pub fn gradient(
    params: &CnnParams,
    doc: &TokenDocument,
    target: &[f64],
    lambda: f64,
    lambda_w: f64,
    mask: Option<&[f64]>,
) -> (f64, CnnGradients) {
    let mut grads = CnnGradients::zeros_like(params);
    let data = accumulate_gradient(params, doc, target, lambda, mask, &mut grads);
    grads.add_weight_decay(params, lambda_w);
    (data + 0.5 * lambda_w * params.weight_norm_sq(), grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EmbeddingTable;
    use crate::textcnn::{CnnConfig, FilterBank};

    fn tiny_config(
        windows: Vec<usize>,
        n_filters: usize,
        p: usize,
        k: usize,
        max_len: usize,
    ) -> CnnConfig {
        CnnConfig {
            window_sizes: windows,
            n_filters,
            embedding_dim: p,
            output_dim: k,
            dropout_rate: 0.0,
            max_len,
        }
    }

    #[test]
    fn all_zero_gives_zero() {
        let cfg = tiny_config(vec![2, 3], 4, 3, 2, 5);
        let params = CnnParams::zeros(cfg, 4).unwrap();
        let doc = TokenDocument::empty(5);
        assert_eq!(forward(&params, &doc), vec![0.0, 0.0]);
    }

    #[test]
    fn single_token_hand_computed() {
        // embedding row of ones, one width-1 filter of ones, projection 1
        let cfg = tiny_config(vec![1], 1, 2, 1, 3);
        let mut params = CnnParams::zeros(cfg, 2).unwrap();
        params.embedding = EmbeddingTable::from_flat(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        params.banks = vec![FilterBank {
            width: 1,
            weights: vec![1.0, 1.0],
            bias: vec![0.0],
        }];
        params.projection = vec![1.0];
        let doc = TokenDocument {
            indices: vec![1, 0, 0],
            true_len: 1,
        };
        let s = forward(&params, &doc);
        assert_eq!(s, vec![2.0f64.tanh()]);
        assert!((s[0] - 0.96403).abs() < 1e-5);
    }

    #[test]
    fn projection_bias_passes_through() {
        let cfg = tiny_config(vec![2], 3, 2, 3, 4);
        let mut params =
            CnnParams::init(cfg, EmbeddingTable::random(5, 2, 0.1, 1), true, 2).unwrap();
        params.projection.fill(0.0);
        params.projection_bias = vec![0.5, -1.0, 2.0];
        let doc = TokenDocument {
            indices: vec![3, 1, 5, 0],
            true_len: 3,
        };
        assert_eq!(forward(&params, &doc), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn gradient_zero_at_minimum() {
        let cfg = tiny_config(vec![1, 2], 2, 2, 2, 4);
        let params = CnnParams::init(cfg, EmbeddingTable::random(3, 2, 0.1, 3), true, 4).unwrap();
        let doc = TokenDocument {
            indices: vec![1, 2, 3, 0],
            true_len: 3,
        };
        let target = forward(&params, &doc);
        let (loss, grads) = gradient(&params, &doc, &target, 10.0, 0.0, None);
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn zero_params_loss_and_bias_gradient() {
        let cfg = tiny_config(vec![2], 2, 3, 3, 4);
        let params = CnnParams::zeros(cfg, 3).unwrap();
        let doc = TokenDocument {
            indices: vec![1, 2, 0, 0],
            true_len: 2,
        };
        let t = [1.0, -2.0, 0.5];
        let lambda = 3.0;
        let (loss, grads) = gradient(&params, &doc, &t, lambda, 0.0, None);
        let norm_sq: f64 = t.iter().map(|x| x * x).sum();
        assert_eq!(loss, 0.5 * lambda * norm_sq);
        let expected: Vec<f64> = t.iter().map(|x| -lambda * x).collect();
        assert_eq!(grads.projection_bias, expected);
    }
}
