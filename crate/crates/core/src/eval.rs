//! Train/test splitting, RMSE, and the repeated-run model comparison.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusBundle, EmbeddingTable};
use crate::factorize::{train, FactorizeError, Hyperparams, ModelKind, Rating, TrainedModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("split of {n} ratings with test fraction {fraction} leaves the training set empty")]
    EmptyTrain { n: usize, fraction: f64 },
    #[error("rmse of an empty set is undefined")]
    Empty,
    #[error("non-finite value in pair {0}")]
    NonFinite(usize),
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error("cannot start worker threads: {0}")]
    Threads(String),
    #[error(transparent)]
    Factorize(#[from] FactorizeError),
}

/// Uniform random hold-out over rating triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64) -> Self {
        Self {
            test_fraction,
            seed,
        }
    }
}

/// Test flags for `n` triplets: exactly `round(n * test_fraction)` of them,
/// chosen by a seeded shuffle.
pub fn split_assignments(n: usize, spec: &SplitSpec) -> Result<Vec<bool>, EvalError> {
    let f = spec.test_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(EvalError::BadFraction(f));
    }
    let n_test = (n as f64 * f).round() as usize;
    if n_test >= n {
        return Err(EvalError::EmptyTrain { n, fraction: f });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut is_test = vec![false; n];
    for &t in &order[..n_test] {
        is_test[t] = true;
    }
    Ok(is_test)
}

/// Splits triplets into `(train, test)`, each in input order.
pub fn split(
    ratings: &[Rating],
    spec: &SplitSpec,
) -> Result<(Vec<Rating>, Vec<Rating>), EvalError> {
    let flags = split_assignments(ratings.len(), spec)?;
    let (test, train): (Vec<_>, Vec<_>) = ratings.iter().zip(&flags).partition(|(_, &t)| t);
    Ok((
        train.into_iter().map(|(r, _)| *r).collect(),
        test.into_iter().map(|(r, _)| *r).collect(),
    ))
}

/// Root mean squared error over `(actual, predicted)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for (i, &(a, p)) in pairs.iter().enumerate() {
        if !a.is_finite() || !p.is_finite() {
            return Err(EvalError::NonFinite(i));
        }
        sum += (a - p) * (a - p);
    }
    Ok((sum / pairs.len() as f64).sqrt())
}

/// RMSE of `model` on `test`, cold-start pairs included via the fallbacks.
pub fn evaluate(model: &TrainedModel, test: &[Rating], clip: bool) -> Result<f64, EvalError> {
    let pairs = test
        .iter()
        .map(|r| {
            model
                .predict_index(Some(r.user as usize), Some(r.item as usize), clip)
                .map(|p| (r.value, p))
        })
        .collect::<Result<Vec<_>, _>>()?;
    rmse(&pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub model: ModelKind,
    /// 1-based.
    pub run: usize,
    pub seed: u64,
    /// Test RMSE, or the failure message.
    pub rmse: Result<f64, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub base_seed: u64,
    pub n_runs: usize,
    /// Hyperparameters per model, in column order (seed as of run 1).
    pub models: Vec<Hyperparams>,
    /// Ordered by model, then run.
    pub runs: Vec<RunResult>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".to_string(), |x| x.to_string())
}

impl ExperimentReport {
    pub fn model_kinds(&self) -> Vec<ModelKind> {
        self.models.iter().map(|h| h.model).collect()
    }

    pub fn runs_of(&self, model: ModelKind) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.model == model)
    }

    /// Mean RMSE over the model's successful runs.
    pub fn mean(&self, model: ModelKind) -> Option<f64> {
        let ok: Vec<f64> = self
            .runs_of(model)
            .filter_map(|r| r.rmse.clone().ok())
            .collect();
        (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
    }

    pub fn all_failed(&self) -> bool {
        self.runs.iter().all(|r| r.rmse.is_err())
    }

    /// `model,run,rmse,seconds` rows, each model followed by its `mean` row.
    /// Timings vary between runs, so they are left blank unless
    /// `with_timings` is set.
    pub fn to_csv(&self, with_timings: bool) -> String {
        let mut out = String::from("model,run,rmse,seconds\n");
        for model in self.model_kinds() {
            let mut total = 0.0;
            for r in self.runs_of(model) {
                total += r.seconds;
                let secs = if with_timings {
                    format!("{:.3}", r.seconds)
                } else {
                    String::new()
                };
                let rmse = r
                    .rmse
                    .as_ref()
                    .map_or_else(|_| "failed".to_string(), |v| v.to_string());
                writeln!(out, "{},{},{},{}", model.name(), r.run, rmse, secs).unwrap();
            }
            let secs = if with_timings {
                format!("{:.3}", total / self.n_runs as f64)
            } else {
                String::new()
            };
            writeln!(
                out,
                "{},mean,{},{}",
                model.name(),
                fmt_opt(self.mean(model)),
                secs
            )
            .unwrap();
        }
        out
    }

    /// Whitespace-separated columns: `run` then one RMSE column per model.
    pub fn to_plot_data(&self) -> String {
        let kinds = self.model_kinds();
        let mut out = format!("# test RMSE per run, base_seed={}\nrun", self.base_seed);
        for m in &kinds {
            write!(out, " {}", m.label()).unwrap();
        }
        out.push('\n');
        for run in 1..=self.n_runs {
            write!(out, "{run}").unwrap();
            for &m in &kinds {
                let v = self
                    .runs_of(m)
                    .find(|r| r.run == run)
                    .and_then(|r| r.rmse.clone().ok());
                match v {
                    Some(x) => write!(out, " {x}").unwrap(),
                    None => out.push_str(" nan"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Runs as rows, models as columns, with an `Average` row.
    pub fn to_table(&self) -> String {
        let kinds = self.model_kinds();
        let mut out = format!("{:<8}", "");
        for m in &kinds {
            write!(out, "{:>12}", m.label()).unwrap();
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |x| format!("{x:.5}"));
        for run in 1..=self.n_runs {
            write!(out, "{run:<8}").unwrap();
            for &m in &kinds {
                let v = self
                    .runs_of(m)
                    .find(|r| r.run == run)
                    .and_then(|r| r.rmse.clone().ok());
                write!(out, "{:>12}", cell(v)).unwrap();
            }
            out.push('\n');
        }
        write!(out, "{:<8}", "Average").unwrap();
        for &m in &kinds {
            write!(out, "{:>12}", cell(self.mean(m))).unwrap();
        }
        out.push('\n');
        out
    }
}

/// How [`run_experiment`] repeats and scores the runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub n_runs: usize,
    /// Run `r` (0-based) seeds initialization with `base_seed + r`.
    pub base_seed: u64,
    /// Clip predictions to the rating scale before scoring.
    pub clip: bool,
    /// Runs executed concurrently. Every run is single-threaded, so the
    /// report is the same for any value here.
    pub threads: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            n_runs: 5,
            base_seed: 0,
            clip: false,
            threads: 1,
        }
    }
}

fn one_run(
    hyper: &Hyperparams,
    r: usize,
    corpus: &CorpusBundle,
    test: &[Rating],
    pretrained: Option<&EmbeddingTable>,
    opts: &ExperimentOptions,
) -> RunResult {
    let mut h = hyper.clone();
    h.seed = opts.base_seed.wrapping_add(r as u64);
    let started = Instant::now();
    let outcome = train(corpus, &h, pretrained)
        .map_err(EvalError::from)
        .and_then(|m| evaluate(&m, test, opts.clip));
    let seconds = started.elapsed().as_secs_f64();
    match &outcome {
        Ok(v) => log::info!("{} run {}: rmse {v:.5} ({seconds:.1}s)", h.model, r + 1),
        Err(e) => log::error!("{} run {} failed: {e}", h.model, r + 1),
    }
    RunResult {
        model: h.model,
        run: r + 1,
        seed: h.seed,
        rmse: outcome.map_err(|e| e.to_string()),
        seconds,
    }
}

/// Trains every model `opts.n_runs` times on the bundle's single split and
/// scores each run on the held-out ratings. A failed run is recorded and
/// the remaining runs continue.
pub fn run_experiment(
    models: &[Hyperparams],
    corpus: &CorpusBundle,
    pretrained: Option<&EmbeddingTable>,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport, EvalError> {
    if opts.n_runs == 0 {
        return Err(EvalError::NoRuns);
    }
    let test = corpus.test_ratings();
    let cells: Vec<(&Hyperparams, usize)> = models
        .iter()
        .flat_map(|h| (0..opts.n_runs).map(move |r| (h, r)))
        .collect();
    let run = |&(h, r): &(&Hyperparams, usize)| one_run(h, r, corpus, &test, pretrained, opts);
    let runs: Vec<RunResult> = if opts.threads <= 1 {
        cells.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| EvalError::Threads(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run).collect())
    };
    Ok(ExperimentReport {
        base_seed: opts.base_seed,
        n_runs: opts.n_runs,
        models: models
            .iter()
            .map(|h| Hyperparams {
                seed: opts.base_seed,
                ..h.clone()
            })
            .collect(),
        runs,
    })
}
