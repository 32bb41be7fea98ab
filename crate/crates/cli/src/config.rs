//! The run configuration file.
//!
//! TOML, every key optional. Relative paths are resolved against the
//! directory holding the file. A complete example with the defaults:
//!
//! ```toml
//! seed = 0                  # split, initialization and missing-word vectors
//! output_dir = "out"
//!
//! [data]
//! dataset = "reviews_Movies_and_TV.json.gz"
//! first_n = 20000
//! on_malformed = "abort"    # or "skip"
//! pretrained = "vectors.txt"  # required by biconvmf+ only
//!
//! [corpus]
//! max_vocab = 8000
//! min_doc_freq = 1
//! max_len = 300
//!
//! [split]
//! test_fraction = 0.2
//!
//! [experiment]
//! models = ["pmf", "convmf", "biconvmf"]
//! n_runs = 5
//! clip = false
//! threads = 1
//! timings = false           # write reports/timings.csv
//!
//! [train]
//! k = 50
//! lambda_wu = 1e-4
//! lambda_wv = 1e-4
//! outer_iters = 30
//! early_stop_tol = 1e-4
//! early_stop_patience = 3
//!
//! [cnn]
//! window_sizes = [3, 4, 5]
//! n_filters = 100
//! embedding_dim = 200
//! dropout_rate = 0.2
//! train_pretrained_embedding = false
//!
//! [fit]
//! epochs = 5
//! batch_size = 128
//! learning_rate = 1e-3
//! decay = 0.9
//! epsilon = 1e-8
//!
//! [models.pmf]
//! lambda_u = 1.0
//! lambda_v = 100.0
//! [models.convmf]
//! lambda_u = 1.0
//! lambda_v = 100.0
//! [models.biconvmf]
//! lambda_u = 100.0
//! lambda_v = 100.0
//! [models."biconvmf+"]
//! lambda_u = 100.0
//! lambda_v = 100.0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use biconvmf::corpus::{CorpusConfig, OnMalformed};
use biconvmf::factorize::{CnnSettings, Hyperparams, ModelKind};
use biconvmf::textcnn::FitConfig;
use biconvmf::SplitSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dataset: Option<PathBuf>,
    pub first_n: usize,
    pub on_malformed: OnMalformed,
    pub pretrained: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dataset: None,
            first_n: 20_000,
            on_malformed: OnMalformed::Abort,
            pretrained: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub models: Vec<ModelKind>,
    pub n_runs: usize,
    pub clip: bool,
    pub threads: usize,
    pub timings: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Pmf, ModelKind::ConvMf, ModelKind::BiConvMf],
            n_runs: 5,
            clip: false,
            threads: 1,
            timings: false,
        }
    }
}

/// Settings shared by every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub k: usize,
    pub lambda_wu: f64,
    pub lambda_wv: f64,
    pub outer_iters: usize,
    pub early_stop_tol: f64,
    pub early_stop_patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = Hyperparams::for_model(ModelKind::Pmf);
        Self {
            k: h.k,
            lambda_wu: h.lambda_wu,
            lambda_wv: h.lambda_wv,
            outer_iters: h.outer_iters,
            early_stop_tol: h.early_stop_tol,
            early_stop_patience: h.early_stop_patience,
        }
    }
}

/// Per-model overrides; unset values fall back to the tuned defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub lambda_u: Option<f64>,
    pub lambda_v: Option<f64>,
    pub lambda_wu: Option<f64>,
    pub lambda_wv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub corpus: CorpusConfig,
    pub split: SplitSection,
    pub experiment: ExperimentSection,
    pub train: TrainSection,
    pub cnn: CnnSettings,
    pub fit: FitConfig,
    pub models: BTreeMap<String, ModelSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataSection::default(),
            corpus: CorpusConfig::default(),
            split: SplitSection::default(),
            experiment: ExperimentSection::default(),
            train: TrainSection::default(),
            cnn: CnnSettings::default(),
            fit: FitConfig::default(),
            models: BTreeMap::new(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.output_dir);
        if let Some(p) = cfg.data.dataset.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = cfg.data.pretrained.as_mut() {
            resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec::new(self.split.test_fraction, self.seed)
    }

    /// Fully resolved hyperparameters for `model`.
    pub fn hyperparams(&self, model: ModelKind) -> Result<Hyperparams, CliError> {
        let mut h = Hyperparams::for_model(model);
        h.k = self.train.k;
        h.lambda_wu = self.train.lambda_wu;
        h.lambda_wv = self.train.lambda_wv;
        h.outer_iters = self.train.outer_iters;
        h.early_stop_tol = self.train.early_stop_tol;
        h.early_stop_patience = self.train.early_stop_patience;
        h.seed = self.seed;
        h.cnn = self.cnn.clone();
        h.fit = self.fit.clone();
        let section = self
            .models
            .iter()
            .find(|(key, _)| key.parse::<ModelKind>().ok() == Some(model));
        if let Some((_, m)) = section {
            h.lambda_u = m.lambda_u.unwrap_or(h.lambda_u);
            h.lambda_v = m.lambda_v.unwrap_or(h.lambda_v);
            h.lambda_wu = m.lambda_wu.unwrap_or(h.lambda_wu);
            h.lambda_wv = m.lambda_wv.unwrap_or(h.lambda_wv);
        }
        h.validate()?;
        Ok(h)
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<(), CliError> {
        for key in self.models.keys() {
            key.parse::<ModelKind>()
                .map_err(|_| CliError::Config(format!("[models.{key}]: unknown model")))?;
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "split.test_fraction must lie strictly between 0 and 1, got {}",
                self.split.test_fraction
            )));
        }
        if self.corpus.max_vocab == 0 || self.corpus.max_len == 0 {
            return Err(CliError::Config(
                "corpus.max_vocab and corpus.max_len must be at least 1".into(),
            ));
        }
        if self.experiment.n_runs == 0 {
            return Err(CliError::Config(
                "experiment.n_runs must be at least 1".into(),
            ));
        }
        for m in ModelKind::ALL {
            self.hyperparams(m)?;
        }
        Ok(())
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.output_dir.join("corpus")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir.join("models")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }

    pub fn bundle_path(&self) -> PathBuf {
        self.corpus_dir().join("bundle.bin")
    }
}

/// File-name-safe model name (`biconvmf+` becomes `biconvmf_plus`).
pub fn file_stem(model: ModelKind) -> String {
    model.name().replace('+', "_plus")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let h = cfg.hyperparams(ModelKind::BiConvMf).unwrap();
        assert_eq!((h.lambda_u, h.lambda_v), (100.0, 100.0));
        assert_eq!(cfg.hyperparams(ModelKind::Pmf).unwrap().lambda_u, 1.0);
    }

    #[test]
    fn model_sections_override_lambdas() {
        let cfg = RunConfig::parse(
            r#"
            seed = 9
            [train]
            k = 8
            [models.convmf]
            lambda_u = 3.5
            [models."biconvmf+"]
            lambda_v = 7.0
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let h = cfg.hyperparams(ModelKind::ConvMf).unwrap();
        assert_eq!((h.lambda_u, h.lambda_v, h.k, h.seed), (3.5, 100.0, 8, 9));
        assert_eq!(
            cfg.hyperparams(ModelKind::BiConvMfPlus).unwrap().lambda_v,
            7.0
        );
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("nonsense = 1").is_err());
        assert!(RunConfig::parse("[experiment]\nmodels = [\"deepconn\"]").is_err());
        let cfg = RunConfig::parse("[models.pmf]\nlambda_u = 0.0").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let cfg = RunConfig::parse("[models.svd]\nlambda_u = 1.0").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let cfg = RunConfig::parse("[split]\ntest_fraction = 1.0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "output_dir = \"o\"\n[data]\ndataset = \"d.json\"\npretrained = \"/abs/v.txt\"\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.output_dir, dir.path().join("o"));
        assert_eq!(cfg.data.dataset.unwrap(), dir.path().join("d.json"));
        assert_eq!(cfg.data.pretrained.unwrap(), PathBuf::from("/abs/v.txt"));
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem(ModelKind::BiConvMfPlus), "biconvmf_plus");
        assert_eq!(file_stem(ModelKind::Pmf), "pmf");
    }
}
