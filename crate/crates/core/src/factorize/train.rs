use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    init_factors, total_loss, update_item_factors, update_user_factors, FactorizeError, Lambdas,
    LatentFactors, SparseRatings, TrainedModel,
};
use crate::corpus::{CorpusBundle, EmbeddingTable, TokenDocument, RANDOM_INIT_RANGE};
use crate::textcnn::{self, CnnConfig, CnnError, CnnParams, FitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Ratings only; both priors centered at zero.
    #[serde(rename = "pmf")]
    Pmf,
    /// Item prior centered at the item-review CNN output.
    #[serde(rename = "convmf")]
    ConvMf,
    /// Both priors centered at review-CNN outputs.
    #[serde(rename = "biconvmf")]
    BiConvMf,
    /// BiConvMF with embeddings loaded from pretrained word vectors.
    #[serde(rename = "biconvmf+")]
    BiConvMfPlus,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Pmf,
        ModelKind::ConvMf,
        ModelKind::BiConvMf,
        ModelKind::BiConvMfPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pmf => "pmf",
            ModelKind::ConvMf => "convmf",
            ModelKind::BiConvMf => "biconvmf",
            ModelKind::BiConvMfPlus => "biconvmf+",
        }
    }

    /// Display label as used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Pmf => "PMF",
            ModelKind::ConvMf => "ConvMF",
            ModelKind::BiConvMf => "BiConvMF",
            ModelKind::BiConvMfPlus => "BiConvMF+",
        }
    }

    pub fn has_user_cnn(self) -> bool {
        matches!(self, ModelKind::BiConvMf | ModelKind::BiConvMfPlus)
    }

    pub fn has_item_cnn(self) -> bool {
        self != ModelKind::Pmf
    }

    pub fn needs_pretrained(self) -> bool {
        self == ModelKind::BiConvMfPlus
    }

    /// Tuned `(λ_U, λ_V)` for each model on Amazon Movies and TV.
    pub fn default_lambdas(self) -> (f64, f64) {
        match self {
            ModelKind::Pmf | ModelKind::ConvMf => (1.0, 100.0),
            ModelKind::BiConvMf | ModelKind::BiConvMfPlus => (100.0, 100.0),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = FactorizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|m| {
                m.name() == lower || (lower == "biconvmf_plus" && *m == ModelKind::BiConvMfPlus)
            })
            .ok_or_else(|| {
                FactorizeError::Config(format!(
                    "unknown model `{s}` (expected one of pmf, convmf, biconvmf, biconvmf+)"
                ))
            })
    }
}

/// CNN architecture settings; `k` and `max_len` come from elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSettings {
    pub window_sizes: Vec<usize>,
    pub n_filters: usize,
    /// Used for randomly initialized embeddings; a pretrained table
    /// overrides it with its own dimension.
    pub embedding_dim: usize,
    pub dropout_rate: f64,
    /// Keep training pretrained embeddings instead of freezing them.
    pub train_pretrained_embedding: bool,
}

impl Default for CnnSettings {
    fn default() -> Self {
        let c = CnnConfig::default();
        Self {
            window_sizes: c.window_sizes,
            n_filters: c.n_filters,
            embedding_dim: c.embedding_dim,
            dropout_rate: c.dropout_rate,
            train_pretrained_embedding: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub model: ModelKind,
    pub k: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_wu: f64,
    pub lambda_wv: f64,
    pub outer_iters: usize,
    /// Stop once the relative change of the objective stays below this for
    /// `early_stop_patience` consecutive outer iterations.
    pub early_stop_tol: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub cnn: CnnSettings,
    pub fit: FitConfig,
}

impl Hyperparams {
    pub fn for_model(model: ModelKind) -> Self {
        let (lambda_u, lambda_v) = model.default_lambdas();
        Self {
            model,
            k: 50,
            lambda_u,
            lambda_v,
            lambda_wu: 1e-4,
            lambda_wv: 1e-4,
            outer_iters: 30,
            early_stop_tol: 1e-4,
            early_stop_patience: 3,
            seed: 0,
            cnn: CnnSettings::default(),
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), FactorizeError> {
        let bad = |m: String| Err(FactorizeError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        for (name, v) in [("lambda_u", self.lambda_u), ("lambda_v", self.lambda_v)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("lambda_wu", self.lambda_wu), ("lambda_wv", self.lambda_wv)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        if !(self.early_stop_tol >= 0.0) {
            return bad("early_stop_tol must be non-negative".into());
        }
        if self.model.has_item_cnn() {
            // max_len is only known with the corpus; any window fits here
            let widest = self.cnn.window_sizes.iter().copied().max().unwrap_or(1);
            self.cnn_config(widest, self.cnn.embedding_dim).validate()?;
            self.fit.validate()?;
        }
        Ok(())
    }

    pub fn lambdas(&self) -> Lambdas {
        Lambdas {
            user: self.lambda_u,
            item: self.lambda_v,
            user_cnn: self.lambda_wu,
            item_cnn: self.lambda_wv,
        }
    }

    pub fn cnn_config(&self, max_len: usize, embedding_dim: usize) -> CnnConfig {
        CnnConfig {
            window_sizes: self.cnn.window_sizes.clone(),
            n_filters: self.cnn.n_filters,
            embedding_dim,
            output_dim: self.k,
            dropout_rate: self.cnn.dropout_rate,
            max_len,
        }
    }
}

/// Objective values around each half-step of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// With the targets this iteration starts from.
    pub loss_start: f64,
    pub loss_after_users: f64,
    pub loss_after_items: f64,
    /// After refitting the CNNs, with their new outputs as targets.
    pub loss_end: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub iterations: Vec<IterationStats>,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.iterations.last().map(|s| s.loss_end)
    }
}

/// Produces the prior mean `cnn(W, X)` for each document of one side and
/// refits itself to the current latent factors.
pub trait LatentEncoder {
    /// Outputs for every document, concatenated (`docs.len() × k`).
    fn encode(&self, docs: &[&TokenDocument]) -> Vec<f64>;

    /// Moves the encoder toward `targets`; returns its mean fitting loss.
    fn fit(
        &mut self,
        docs: &[&TokenDocument],
        targets: &[f64],
        lambda: f64,
        lambda_w: f64,
        seed: u64,
    ) -> Result<f64, CnnError>;

    /// Squared norm of the regularized weights.
    fn weight_norm_sq(&self) -> f64;
}

/// The review CNN as a [`LatentEncoder`].
pub struct TextCnn {
    pub params: CnnParams,
    pub fit: FitConfig,
}

impl LatentEncoder for TextCnn {
    fn encode(&self, docs: &[&TokenDocument]) -> Vec<f64> {
        docs.iter()
            .flat_map(|d| textcnn::forward(&self.params, d))
            .collect()
    }

    fn fit(
        &mut self,
        docs: &[&TokenDocument],
        targets: &[f64],
        lambda: f64,
        lambda_w: f64,
        seed: u64,
    ) -> Result<f64, CnnError> {
        textcnn::fit_to_targets(
            &mut self.params,
            docs,
            targets,
            lambda,
            lambda_w,
            &self.fit,
            seed,
        )
    }

    fn weight_norm_sq(&self) -> f64 {
        self.params.weight_norm_sq()
    }
}

/// An encoder whose outputs never change, with no weights.
pub struct FixedTargets(pub Vec<f64>);

impl LatentEncoder for FixedTargets {
    fn encode(&self, _docs: &[&TokenDocument]) -> Vec<f64> {
        self.0.clone()
    }

    fn fit(
        &mut self,
        _: &[&TokenDocument],
        _: &[f64],
        _: f64,
        _: f64,
        _: u64,
    ) -> Result<f64, CnnError> {
        Ok(0.0)
    }

    fn weight_norm_sq(&self) -> f64 {
        0.0
    }
}

/// One side's documents and encoder.
pub struct Side<'a> {
    pub docs: Vec<&'a TokenDocument>,
    pub encoder: &'a mut dyn LatentEncoder,
}

/// SplitMix64 finalizer: independent seeds for separate random streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_USER_CNN: u64 = 1;
const STREAM_ITEM_CNN: u64 = 2;
const STREAM_USER_EMBEDDING: u64 = 3;
const STREAM_ITEM_EMBEDDING: u64 = 4;
const STREAM_FIT: u64 = 1 << 32;

/// Alternating minimization of the objective from `factors`.
///
/// Each outer iteration: solve all users, solve all items (encoder outputs
/// fixed), refit each encoder to its side's new factors, refresh targets.
/// A side without an encoder uses a zero prior mean.
pub fn coordinate_descent(
    ratings: &SparseRatings,
    mut factors: LatentFactors,
    mut user_side: Option<Side<'_>>,
    mut item_side: Option<Side<'_>>,
    hyper: &Hyperparams,
) -> Result<(LatentFactors, TrainingLog), FactorizeError> {
    hyper.validate()?;
    let lambdas = hyper.lambdas();
    let k = factors.k;
    let refresh = |side: &Option<Side<'_>>, n: usize| -> Result<Option<Vec<f64>>, FactorizeError> {
        side.as_ref()
            .map(|s| {
                let t = s.encoder.encode(&s.docs);
                if t.len() != n * k {
                    return Err(FactorizeError::Shape(format!(
                        "encoder produced {} values for {n} entities of dimension {k}",
                        t.len()
                    )));
                }
                Ok(t)
            })
            .transpose()
    };
    let norm = |side: &Option<Side<'_>>| side.as_ref().map_or(0.0, |s| s.encoder.weight_norm_sq());

    let mut user_targets = refresh(&user_side, ratings.n_users())?;
    let mut item_targets = refresh(&item_side, ratings.n_items())?;
    let loss =
        |f: &LatentFactors, ut: &Option<Vec<f64>>, it: &Option<Vec<f64>>, nu: f64, ni: f64| {
            total_loss(ratings, f, ut.as_deref(), it.as_deref(), &lambdas, nu, ni)
        };

    let mut log = TrainingLog::default();
    let mut previous = loss(
        &factors,
        &user_targets,
        &item_targets,
        norm(&user_side),
        norm(&item_side),
    );
    let mut calm = 0usize;
    for iteration in 0..hyper.outer_iters {
        let (nu, ni) = (norm(&user_side), norm(&item_side));
        let loss_start = loss(&factors, &user_targets, &item_targets, nu, ni);
        factors.users =
            update_user_factors(ratings, &factors, user_targets.as_deref(), hyper.lambda_u)?;
        let loss_after_users = loss(&factors, &user_targets, &item_targets, nu, ni);
        factors.items =
            update_item_factors(ratings, &factors, item_targets.as_deref(), hyper.lambda_v)?;
        let loss_after_items = loss(&factors, &user_targets, &item_targets, nu, ni);

        let fit_seed = derive_seed(hyper.seed, STREAM_FIT + iteration as u64);
        if let Some(side) = user_side.as_mut() {
            let fit = side.encoder.fit(
                &side.docs,
                &factors.users,
                hyper.lambda_u,
                hyper.lambda_wu,
                derive_seed(fit_seed, 0),
            )?;
            log::debug!("iteration {iteration}: user cnn fit loss {fit:.6}");
        }
        if let Some(side) = item_side.as_mut() {
            let fit = side.encoder.fit(
                &side.docs,
                &factors.items,
                hyper.lambda_v,
                hyper.lambda_wv,
                derive_seed(fit_seed, 1),
            )?;
            log::debug!("iteration {iteration}: item cnn fit loss {fit:.6}");
        }
        user_targets = refresh(&user_side, ratings.n_users())?;
        item_targets = refresh(&item_side, ratings.n_items())?;
        let loss_end = loss(
            &factors,
            &user_targets,
            &item_targets,
            norm(&user_side),
            norm(&item_side),
        );

        let stats = IterationStats {
            iteration,
            loss_start,
            loss_after_users,
            loss_after_items,
            loss_end,
        };
        if ![loss_start, loss_after_users, loss_after_items, loss_end]
            .iter()
            .all(|v| v.is_finite())
            || !factors.is_finite()
        {
            return Err(FactorizeError::NonFiniteLoss {
                iteration,
                stats: format!("{stats:?}"),
            });
        }
        log::info!(
            "iteration {iteration}: loss {loss_start:.6} -> users {loss_after_users:.6} -> items {loss_after_items:.6} -> cnn {loss_end:.6}"
        );
        log.iterations.push(stats);

        let rel = (previous - loss_end).abs() / previous.abs().max(f64::MIN_POSITIVE);
        previous = loss_end;
        calm = if rel < hyper.early_stop_tol {
            calm + 1
        } else {
            0
        };
        if hyper.early_stop_patience > 0 && calm >= hyper.early_stop_patience {
            log.stopped_early = true;
            break;
        }
    }
    Ok((factors, log))
}

fn build_cnn(
    hyper: &Hyperparams,
    max_len: usize,
    vocab_size: usize,
    pretrained: Option<&EmbeddingTable>,
    embedding_stream: u64,
    cnn_stream: u64,
) -> Result<TextCnn, FactorizeError> {
    let (embedding, trainable) = match pretrained {
        Some(table) => {
            if table.n_rows() != vocab_size + 1 {
                return Err(FactorizeError::Config(format!(
                    "pretrained table has {} rows, vocabulary needs {}",
                    table.n_rows(),
                    vocab_size + 1
                )));
            }
            (table.clone(), hyper.cnn.train_pretrained_embedding)
        }
        None => (
            EmbeddingTable::random(
                vocab_size,
                hyper.cnn.embedding_dim,
                RANDOM_INIT_RANGE,
                derive_seed(hyper.seed, embedding_stream),
            ),
            true,
        ),
    };
    let config = hyper.cnn_config(max_len, embedding.dim());
    let params = CnnParams::init(
        config,
        embedding,
        trainable,
        derive_seed(hyper.seed, cnn_stream),
    )?;
    Ok(TextCnn {
        params,
        fit: hyper.fit.clone(),
    })
}

/// Trains `hyper.model` on the bundle's training split.
///
/// `pretrained` must be given for BiConvMF+ and is ignored otherwise.
pub fn train(
    corpus: &CorpusBundle,
    hyper: &Hyperparams,
    pretrained: Option<&EmbeddingTable>,
) -> Result<TrainedModel, FactorizeError> {
    hyper.validate()?;
    let model = hyper.model;
    if model.needs_pretrained() && pretrained.is_none() {
        return Err(FactorizeError::Config(
            "biconvmf+ requires a pretrained embedding table".into(),
        ));
    }
    let pretrained = if model.needs_pretrained() {
        pretrained
    } else {
        None
    };
    let ratings = corpus.train_ratings();
    let max_len = corpus.config.max_len;
    let vocab_size = corpus.vocab.len();

    let mut user_cnn = model
        .has_user_cnn()
        .then(|| {
            build_cnn(
                hyper,
                max_len,
                vocab_size,
                pretrained,
                STREAM_USER_EMBEDDING,
                STREAM_USER_CNN,
            )
        })
        .transpose()?;
    let mut item_cnn = model
        .has_item_cnn()
        .then(|| {
            build_cnn(
                hyper,
                max_len,
                vocab_size,
                pretrained,
                STREAM_ITEM_EMBEDDING,
                STREAM_ITEM_CNN,
            )
        })
        .transpose()?;

    let factors = init_factors(ratings.n_users(), ratings.n_items(), hyper.k, hyper.seed)?;
    let user_side = user_cnn.as_mut().map(|c| Side {
        docs: corpus.user_docs.iter().collect(),
        encoder: c as &mut dyn LatentEncoder,
    });
    let item_side = item_cnn.as_mut().map(|c| Side {
        docs: corpus.item_docs.iter().collect(),
        encoder: c as &mut dyn LatentEncoder,
    });
    let (factors, log) = coordinate_descent(&ratings, factors, user_side, item_side, hyper)?;

    Ok(TrainedModel::new(
        hyper.clone(),
        corpus.user_keys.clone(),
        corpus.item_keys.clone(),
        factors,
        user_cnn.map(|c| c.params),
        item_cnn.map(|c| c.params),
        log,
        &ratings,
    ))
}
