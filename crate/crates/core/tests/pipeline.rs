//! Corpus to checkpoint to RMSE on a small synthetic dataset.

use std::io::Cursor;

use biconvmf::corpus::{read_pretrained_embeddings, CorpusBundle, CorpusConfig, EmbeddingTable};
use biconvmf::eval::{evaluate, run_experiment, ExperimentOptions, SplitSpec};
use biconvmf::factorize::{train, FactorizeError, Hyperparams, ModelKind, TrainedModel};
use biconvmf::synthetic::{generate, SyntheticConfig};
use biconvmf::ReviewRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_bundle(n_ratings: usize) -> CorpusBundle {
    let records = generate(&SyntheticConfig {
        n_users: 60,
        n_items: 15,
        n_ratings,
        ..Default::default()
    });
    let config = CorpusConfig {
        max_vocab: 500,
        min_doc_freq: 1,
        max_len: 60,
    };
    CorpusBundle::build(&records, &config, &SplitSpec::new(0.2, 11)).unwrap()
}

fn opts(n_runs: usize, base_seed: u64) -> ExperimentOptions {
    ExperimentOptions {
        n_runs,
        base_seed,
        ..Default::default()
    }
}

fn small_hyper(model: ModelKind) -> Hyperparams {
    let mut h = Hyperparams::for_model(model);
    h.k = 5;
    h.outer_iters = 3;
    h.cnn.window_sizes = vec![1, 2, 3];
    h.cnn.n_filters = 4;
    h.cnn.embedding_dim = 8;
    h.fit.epochs = 2;
    h.fit.batch_size = 16;
    h
}

fn toy_pretrained(bundle: &CorpusBundle, dim: usize) -> EmbeddingTable {
    // vectors for every other vocabulary word; the rest are drawn at random
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut text = String::new();
    for (n, tok) in bundle.vocab.tokens().iter().enumerate() {
        if n % 2 == 0 {
            text.push_str(tok);
            for _ in 0..dim {
                text.push_str(&format!(" {:.4}", rng.random_range(-0.5..0.5)));
            }
            text.push('\n');
        }
    }
    read_pretrained_embeddings(Cursor::new(text), &bundle.vocab, dim, 9).unwrap()
}

#[test]
fn every_model_trains_and_predicts_finitely() {
    let bundle = toy_bundle(400);
    let pretrained = toy_pretrained(&bundle, 8);
    let test = bundle.test_ratings();
    for model in ModelKind::ALL {
        let m = train(&bundle, &small_hyper(model), Some(&pretrained)).unwrap();
        assert_eq!(m.cnn_user.is_some(), model.has_user_cnn(), "{model}");
        assert_eq!(m.cnn_item.is_some(), model.has_item_cnn(), "{model}");
        assert_eq!(m.log.iterations.len(), 3);
        for s in &m.log.iterations {
            assert!(s.loss_after_users <= s.loss_start + 1e-12, "{model}: {s:?}");
            assert!(
                s.loss_after_items <= s.loss_after_users + 1e-12,
                "{model}: {s:?}"
            );
        }
        let rmse = evaluate(&m, &test, false).unwrap();
        assert!(rmse.is_finite() && rmse > 0.0, "{model}: {rmse}");
        let clipped = evaluate(&m, &test, true).unwrap();
        assert!(
            clipped <= rmse + 1e-12,
            "clipping to the rating scale can only help"
        );
    }
}

#[test]
fn pretrained_embeddings_stay_frozen_by_default() {
    let bundle = toy_bundle(300);
    let pretrained = toy_pretrained(&bundle, 8);
    let m = train(
        &bundle,
        &small_hyper(ModelKind::BiConvMfPlus),
        Some(&pretrained),
    )
    .unwrap();
    assert_eq!(m.cnn_user.as_ref().unwrap().embedding, pretrained);
    assert_eq!(m.cnn_item.as_ref().unwrap().embedding, pretrained);

    let mut h = small_hyper(ModelKind::BiConvMfPlus);
    h.cnn.train_pretrained_embedding = true;
    let m = train(&bundle, &h, Some(&pretrained)).unwrap();
    assert_ne!(m.cnn_item.as_ref().unwrap().embedding, pretrained);
}

#[test]
fn biconvmf_plus_requires_pretrained_vectors() {
    let bundle = toy_bundle(100);
    let err = train(&bundle, &small_hyper(ModelKind::BiConvMfPlus), None).unwrap_err();
    assert!(matches!(err, FactorizeError::Config(_)), "{err}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let bundle = toy_bundle(300);
    let h = small_hyper(ModelKind::BiConvMf);
    let save = |m: &TrainedModel| {
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        buf
    };
    let a = save(&train(&bundle, &h, None).unwrap());
    let b = save(&train(&bundle, &h, None).unwrap());
    assert_eq!(a, b);
    let mut other = h.clone();
    other.seed = 1;
    assert_ne!(a, save(&train(&bundle, &other, None).unwrap()));
}

#[test]
fn checkpoint_round_trip_predicts_bitwise() {
    let bundle = toy_bundle(300);
    let model = train(&bundle, &small_hyper(ModelKind::ConvMf), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("convmf.bin");
    model.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let u = &bundle.user_keys[rng.random_range(0..bundle.n_users())];
        let i = &bundle.item_keys[rng.random_range(0..bundle.n_items())];
        let a = model.predict(u, i, false).unwrap();
        let b = back.predict(u, i, false).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(back.cnn_item, model.cnn_item);
    assert_eq!(back.log, model.log);
}

#[test]
fn bundle_round_trip_trains_identically() {
    let bundle = toy_bundle(250);
    let mut buf = Vec::new();
    bundle.write_to(&mut buf).unwrap();
    let back = CorpusBundle::read_from(Cursor::new(buf)).unwrap();
    let h = small_hyper(ModelKind::BiConvMf);
    let a = train(&bundle, &h, None).unwrap();
    let b = train(&back, &h, None).unwrap();
    assert_eq!(a.factors, b.factors);
}

#[test]
fn experiment_on_a_five_by_four_instance() {
    let mut records = Vec::new();
    for u in 0..5 {
        for i in 0..4 {
            records.push(ReviewRecord {
                user_id: format!("u{u}"),
                item_id: format!("i{i}"),
                rating: ((u + 2 * i) % 5 + 1) as f64,
                review_text: format!("word{u} thing{i}"),
            });
        }
    }
    let bundle =
        CorpusBundle::build(&records, &CorpusConfig::default(), &SplitSpec::new(0.2, 0)).unwrap();
    let mut h = Hyperparams::for_model(ModelKind::Pmf);
    h.k = 2;
    let report = run_experiment(&[h], &bundle, None, &opts(1, 7)).unwrap();
    assert_eq!(report.runs.len(), 1);
    let only = report.runs[0].rmse.clone().unwrap();
    assert_eq!(report.mean(ModelKind::Pmf), Some(only));
    assert_eq!(report.runs[0].seed, 7);

    let csv = report.to_csv(false);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(2).unwrap().starts_with("pmf,mean,"));
}

#[test]
fn failed_runs_are_marked_and_others_continue() {
    let bundle = toy_bundle(200);
    let ok = small_hyper(ModelKind::Pmf);
    // no pretrained table: every BiConvMF+ run fails
    let bad = small_hyper(ModelKind::BiConvMfPlus);
    let report = run_experiment(&[ok, bad], &bundle, None, &opts(2, 0)).unwrap();
    assert!(report.runs_of(ModelKind::Pmf).all(|r| r.rmse.is_ok()));
    assert!(report
        .runs_of(ModelKind::BiConvMfPlus)
        .all(|r| r.rmse.is_err()));
    assert!(!report.all_failed());
    assert!(report.to_csv(false).contains("biconvmf+,1,failed,"));
    assert!(report.to_csv(false).contains("biconvmf+,mean,failed,"));
}

#[test]
fn reports_are_byte_reproducible() {
    let bundle = toy_bundle(200);
    let models = [small_hyper(ModelKind::Pmf), small_hyper(ModelKind::ConvMf)];
    let a = run_experiment(&models, &bundle, None, &opts(2, 5)).unwrap();
    let b = run_experiment(&models, &bundle, None, &opts(2, 5)).unwrap();
    assert_eq!(a.to_csv(false), b.to_csv(false));
    assert_eq!(a.to_plot_data(), b.to_plot_data());
    let threaded = ExperimentOptions {
        threads: 3,
        ..opts(2, 5)
    };
    let c = run_experiment(&models, &bundle, None, &threaded).unwrap();
    assert_eq!(a.to_csv(false), c.to_csv(false));
}

#[test]
fn pmf_spread_across_runs_is_small() {
    let bundle = toy_bundle(800);
    let mut h = Hyperparams::for_model(ModelKind::Pmf);
    h.k = 10;
    let report = run_experiment(&[h], &bundle, None, &opts(5, 0)).unwrap();
    let rmses: Vec<f64> = report
        .runs
        .iter()
        .map(|r| r.rmse.clone().unwrap())
        .collect();
    let spread = rmses.iter().cloned().fold(f64::MIN, f64::max)
        - rmses.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.01, "{rmses:?}");
}
