//! The four subcommands. Each one reads the configuration, checks its
//! inputs and output paths before doing any work, and writes its artifacts
//! under `<out>/{corpus,models,reports}`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use biconvmf::corpus::{
    load_pretrained_embeddings, read_first_n, CorpusBundle, DatasetStats, EmbeddingTable,
};
use biconvmf::eval::{evaluate, run_experiment, ExperimentOptions, ExperimentReport};
use biconvmf::factorize::{train, ModelKind, TrainedModel, TrainingLog};
use flate2::read::MultiGzDecoder;
use serde::Serialize;

use crate::args::{Command, GlobalArgs};
use crate::config::{file_stem, RunConfig};
use crate::CliError;

/// Loads the configuration named by `--config` (or the defaults) and
/// applies the command-line overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &global.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if global.clip {
        cfg.experiment.clip = true;
    }
    Ok(cfg)
}

pub fn run(global: &GlobalArgs, command: Command) -> Result<(), CliError> {
    let mut cfg = resolve_config(global)?;
    match command {
        Command::Ingest { dataset, first_n } => {
            if let Some(d) = dataset {
                cfg.data.dataset = Some(d);
            }
            if let Some(n) = first_n {
                cfg.data.first_n = n;
            }
            cfg.validate()?;
            ingest(&cfg, global.force).map(|_| ())
        }
        Command::Train { model } => {
            cfg.validate()?;
            train_model(&cfg, model, global.force).map(|_| ())
        }
        Command::Evaluate { model } => {
            cfg.validate()?;
            evaluate_model(&cfg, model, global.force).map(|_| ())
        }
        Command::Compare {
            model,
            runs,
            threads,
        } => {
            if !model.is_empty() {
                cfg.experiment.models = model;
            }
            if let Some(r) = runs {
                cfg.experiment.n_runs = r;
            }
            if let Some(t) = threads {
                cfg.experiment.threads = t;
            }
            cfg.validate()?;
            compare(&cfg, global.force).map(|_| ())
        }
    }
}

fn claim(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Exists(path.to_path_buf()));
    }
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        None => Ok(()),
    }
}

fn open_dataset(path: &Path) -> Result<Box<dyn BufRead>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open dataset {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn load_bundle(cfg: &RunConfig) -> Result<CorpusBundle, CliError> {
    let path = cfg.bundle_path();
    if !path.exists() {
        return Err(CliError::Data(format!(
            "no corpus bundle at {}; run `biconvmf ingest` with the same --config/--out first",
            path.display()
        )));
    }
    Ok(CorpusBundle::load(&path)?)
}

fn load_pretrained(
    cfg: &RunConfig,
    models: &[ModelKind],
    bundle: &CorpusBundle,
) -> Result<Option<EmbeddingTable>, CliError> {
    if !models.iter().any(|m| m.needs_pretrained()) {
        return Ok(None);
    }
    let Some(path) = &cfg.data.pretrained else {
        return Err(CliError::Config(
            "biconvmf+ needs pretrained word vectors; set data.pretrained".into(),
        ));
    };
    if !path.exists() {
        return Err(CliError::Config(format!(
            "pretrained vectors {} not found",
            path.display()
        )));
    }
    log::info!("loading word vectors from {}", path.display());
    Ok(Some(load_pretrained_embeddings(
        path,
        &bundle.vocab,
        cfg.cnn.embedding_dim,
        cfg.seed,
    )?))
}

/// Dataset counts plus the split that produced the bundle.
pub fn stats_text(stats: &DatasetStats, cfg: &RunConfig) -> String {
    format!(
        "{stats}\n# split seed {}, test fraction {}\n",
        cfg.seed, cfg.split.test_fraction
    )
}

pub fn ingest(cfg: &RunConfig, force: bool) -> Result<CorpusBundle, CliError> {
    let Some(dataset) = &cfg.data.dataset else {
        return Err(CliError::Config(
            "no dataset given; set data.dataset or pass --dataset".into(),
        ));
    };
    let bundle_path = cfg.bundle_path();
    claim(&bundle_path, force)?;

    log::info!(
        "reading up to {} records from {}",
        cfg.data.first_n,
        dataset.display()
    );
    let records = read_first_n(
        open_dataset(dataset)?,
        cfg.data.first_n,
        cfg.data.on_malformed,
    )?;
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no usable records",
            dataset.display()
        )));
    }
    let bundle = CorpusBundle::build(&records, &cfg.corpus, &cfg.split_spec())?;
    println!("{}", bundle.stats);
    log::info!(
        "vocabulary {} words, {} test ratings",
        bundle.vocab.len(),
        bundle.is_test.iter().filter(|&&t| t).count()
    );

    create_parent(&bundle_path)?;
    bundle.save(&bundle_path)?;
    write(
        &cfg.corpus_dir().join("stats.txt"),
        stats_text(&bundle.stats, cfg),
    )?;
    log::info!("wrote {}", bundle_path.display());
    Ok(bundle)
}

pub fn checkpoint_path(cfg: &RunConfig, model: ModelKind) -> PathBuf {
    cfg.models_dir().join(format!("{}.bin", file_stem(model)))
}

pub fn loss_csv(log: &TrainingLog) -> String {
    let mut out = String::from("iteration,loss_start,loss_after_users,loss_after_items,loss_end\n");
    for s in &log.iterations {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.iteration, s.loss_start, s.loss_after_users, s.loss_after_items, s.loss_end
        ));
    }
    out
}

pub fn train_model(
    cfg: &RunConfig,
    model: ModelKind,
    force: bool,
) -> Result<TrainedModel, CliError> {
    let hyper = cfg.hyperparams(model)?;
    let path = checkpoint_path(cfg, model);
    let loss_path = cfg
        .models_dir()
        .join(format!("{}_loss.csv", file_stem(model)));
    claim(&path, force)?;
    claim(&loss_path, force)?;
    let bundle = load_bundle(cfg)?;
    let pretrained = load_pretrained(cfg, &[model], &bundle)?;

    log::info!("training {model} with seed {}", hyper.seed);
    let trained = train(&bundle, &hyper, pretrained.as_ref())?;
    if let Some(loss) = trained.log.final_loss() {
        log::info!("{model}: final objective {loss:.6}");
    }
    create_parent(&path)?;
    trained.save(&path)?;
    write(&loss_path, loss_csv(&trained.log))?;
    log::info!("wrote {}", path.display());
    Ok(trained)
}

pub fn evaluate_model(cfg: &RunConfig, model: ModelKind, force: bool) -> Result<f64, CliError> {
    let out = cfg
        .reports_dir()
        .join(format!("{}_eval.csv", file_stem(model)));
    claim(&out, force)?;
    let bundle = load_bundle(cfg)?;
    let path = checkpoint_path(cfg, model);
    if !path.exists() {
        return Err(CliError::Data(format!(
            "no checkpoint at {}; run `biconvmf train --model {model}` first",
            path.display()
        )));
    }
    let trained = TrainedModel::load(&path)?;
    if trained.user_keys != bundle.user_keys || trained.item_keys != bundle.item_keys {
        return Err(CliError::Data(format!(
            "{} was trained on a different corpus than {}",
            path.display(),
            cfg.bundle_path().display()
        )));
    }
    let rmse = evaluate(&trained, &bundle.test_ratings(), cfg.experiment.clip)?;
    println!("{} test RMSE {rmse:.5}", model.label());
    write(
        &out,
        format!(
            "model,seed,clip,rmse\n{model},{},{},{rmse}\n",
            trained.hyper.seed, cfg.experiment.clip
        ),
    )?;
    Ok(rmse)
}

#[derive(Serialize)]
struct CompareMeta<'a> {
    base_seed: u64,
    split_seed: u64,
    test_fraction: f64,
    n_runs: usize,
    clip: bool,
    mean_rmse: Vec<(ModelKind, Option<f64>)>,
    models: &'a [biconvmf::Hyperparams],
}

pub fn compare(cfg: &RunConfig, force: bool) -> Result<ExperimentReport, CliError> {
    let dir = cfg.reports_dir();
    let outputs = ["report.csv", "rmse_by_run.dat", "compare.json"].map(|f| dir.join(f));
    for p in &outputs {
        claim(p, force)?;
    }
    let timings_path = dir.join("timings.csv");
    if cfg.experiment.timings {
        claim(&timings_path, force)?;
    }
    let models = cfg
        .experiment
        .models
        .iter()
        .map(|&m| cfg.hyperparams(m))
        .collect::<Result<Vec<_>, _>>()?;
    let bundle = load_bundle(cfg)?;
    let pretrained = load_pretrained(cfg, &cfg.experiment.models, &bundle)?;

    let opts = ExperimentOptions {
        n_runs: cfg.experiment.n_runs,
        base_seed: cfg.seed,
        clip: cfg.experiment.clip,
        threads: cfg.experiment.threads,
    };
    let report = run_experiment(&models, &bundle, pretrained.as_ref(), &opts)?;
    println!("{}", report.to_table());

    let meta = CompareMeta {
        base_seed: cfg.seed,
        split_seed: bundle.split.seed,
        test_fraction: bundle.split.test_fraction,
        n_runs: report.n_runs,
        clip: opts.clip,
        mean_rmse: report
            .model_kinds()
            .into_iter()
            .map(|m| (m, report.mean(m)))
            .collect(),
        models: &report.models,
    };
    let json = serde_json::to_string_pretty(&meta).expect("report metadata serializes") + "\n";
    write(&outputs[0], report.to_csv(false))?;
    write(&outputs[1], report.to_plot_data())?;
    write(&outputs[2], json)?;
    if cfg.experiment.timings {
        write(&timings_path, report.to_csv(true))?;
    }
    for r in &report.runs {
        if let Err(e) = &r.rmse {
            eprintln!("{} run {} failed: {e}", r.model, r.run);
        }
    }
    if report.all_failed() {
        return Err(CliError::Training("every run failed".into()));
    }
    Ok(report)
}
