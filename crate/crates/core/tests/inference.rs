mod common;

use common::*;
use tfe_core::inference::*;
use tfe_core::model::forward::Predictions;
use tfe_core::model::*;
use tfe_core::preprocess::{build_estimator_configs, FittedView};
use tfe_core::prior::{generate, PriorHyperparams};
use tfe_core::tensor::alloc_scope;
use tfe_core::Error;

fn micro(task: Task, seed: u64) -> Weights<f64> {
    Weights::init(&ModelConfig::micro(task), seed).unwrap()
}

fn probs(p: &Predictions) -> &Vec<Vec<f64>> {
    match p {
        Predictions::Probs(p) => p,
        Predictions::Bars(_) => panic!("expected probabilities"),
    }
}

fn dataset(preset: &str, seed: u64) -> tfe_core::dataset::Dataset {
    let mut hp = PriorHyperparams::preset(preset).unwrap();
    hp.seed = seed;
    generate(&hp).unwrap().dataset
}

#[test]
fn chunked_forward_matches_unchunked() {
    let w = micro(Task::Classification, 3);
    let cells = random_cells(50, 7, 0.1, 4);
    let labels = random_labels(35, 3, 5);
    let input = class_input(&cells, 35, &labels, 3);
    let cold = forward(&w, &input).unwrap();
    for chunk in [1, 3, 7, 64] {
        let plan = plan_chunks(35, 15, chunk, ChunkOverride::Force);
        let out = forward_chunked(&w, &input, &plan).unwrap();
        let d = out.predictions.max_abs_diff(&cold.predictions);
        assert!(d < 1e-6, "chunk {chunk}: {d}");
        for (a, b) in out.inducing.iter().zip(&cold.inducing) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }
    let whole = forward_chunked(&w, &input, &plan_chunks(35, 15, 50, ChunkOverride::Force)).unwrap();
    assert_eq!(whole.predictions, cold.predictions);
}

#[test]
fn chunked_regression_matches_unchunked() {
    let w = micro(Task::Regression, 8);
    let cells = random_cells(40, 5, 0.05, 9);
    let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin() * 3.0 + 10.0).collect();
    let input = ModelInput::<f64>::from_rows(&cells, 30, Targets::Values(y)).unwrap();
    let cold = forward(&w, &input).unwrap();
    let out = forward_chunked(&w, &input, &plan_chunks(30, 10, 7, ChunkOverride::Force)).unwrap();
    let (Predictions::Bars(a), Predictions::Bars(b)) = (&out.predictions, &cold.predictions) else {
        panic!("expected bars")
    };
    for (x, y) in a.iter().zip(b) {
        assert!(max_diff(&x.logits(), &y.logits()) < 1e-6);
    }
}

#[test]
fn chunk_execution_order_does_not_matter() {
    let w = micro(Task::Classification, 11);
    let cells = random_cells(60, 6, 0.0, 12);
    let labels = random_labels(40, 4, 13);
    let input = class_input(&cells, 40, &labels, 4);
    let plan = plan_chunks(40, 20, 9, ChunkOverride::Force);
    let seq = forward_chunked_with(&w, &input, &plan, ChunkExec::Sequential).unwrap();
    for exec in [ChunkExec::Reversed, ChunkExec::Parallel] {
        let other = forward_chunked_with(&w, &input, &plan, exec).unwrap();
        assert_eq!(other.predictions, seq.predictions);
    }
}

fn pre_icl_peak(r: usize, chunked: bool) -> u64 {
    let w = Weights::<f32>::init(&ModelConfig::micro(Task::Classification), 1).unwrap();
    let f = 240;
    let n_train = r / 2;
    let cells = random_cells(r, f, 0.0, 2);
    let labels = random_labels(n_train, 3, 3);
    let input = ModelInput::<f32>::from_rows(&cells, n_train, Targets::Classes { labels, n_classes: 3 }).unwrap();
    let mode = if chunked { ChunkOverride::Force } else { ChunkOverride::Off };
    let plan = plan_chunks(n_train, r - n_train, 128, mode);
    let (res, stats) = alloc_scope(|| encode_rows_chunked(&w, &input, &plan, ChunkExec::Sequential));
    res.unwrap();
    stats.peak_bytes
}

#[test]
fn chunking_flattens_pre_icl_peak() {
    let chunked = pre_icl_peak(4096, true) as f64 / pre_icl_peak(512, true) as f64;
    let unchunked = pre_icl_peak(4096, false) as f64 / pre_icl_peak(512, false) as f64;
    assert!(chunked < 1.5, "chunked ratio {chunked}");
    assert!(unchunked > 6.0, "unchunked ratio {unchunked}");
}

#[test]
fn cached_prediction_matches_cold_path() {
    let data = dataset("micro-cls", 21);
    let cfg = &build_estimator_configs(1, data.n_features(), 500, 7)[0];
    let view = FittedView::fit(&data, cfg).unwrap();
    let w = micro(Task::Classification, 22);
    let cold = forward(&w, &view.model_input::<f64>(&data).unwrap()).unwrap();

    let cache = build_kv_cache(&w, &view.train_input(&data).unwrap(), &cfg.hash(), 2048, ChunkOverride::Auto).unwrap();
    let n = view.train_order.len();
    assert_eq!(cache.icl_kv.len(), w.config.icl_layers);
    for kv in &cache.icl_kv {
        assert_eq!(kv.shape(), &[n, 2, w.config.icl_emsize() / w.config.icl_heads]);
    }
    assert_eq!(cache.final_train_embeds.shape(), &[n, w.config.icl_emsize()]);
    for (a, b) in cache.icl_kv.iter().zip(&cold.test_kv) {
        assert!(a.max_abs_diff(b) < 1e-8);
    }
    let onehot = cache.train_label_onehot().unwrap();
    assert_eq!(onehot.shape(), &[n, 3]);

    let test_rows = data.test_indices();
    let test = view.rows_input::<f64>(&data, &test_rows).unwrap();
    let cached = predict_cached(&cache, &w, &test, &cfg.hash(), None).unwrap();
    let d = cached.max_abs_diff(&cold.predictions);
    assert!(d < 1e-6, "{d}");

    // chunked test encoding gives the same answer
    let plan = plan_chunks(0, test_rows.len(), 3, ChunkOverride::Force);
    let chunked = predict_cached(&cache, &w, &test, &cfg.hash(), Some(&plan)).unwrap();
    assert!(chunked.max_abs_diff(&cached) < 1e-12);
}

#[test]
fn cached_regression_matches_cold_path() {
    let data = dataset("micro-reg", 31);
    let cfg = &build_estimator_configs(2, data.n_features(), 500, 3)[1];
    let view = FittedView::fit(&data, cfg).unwrap();
    let w = micro(Task::Regression, 32);
    let cold = forward(&w, &view.model_input::<f64>(&data).unwrap()).unwrap();
    let cache = build_kv_cache(&w, &view.train_input(&data).unwrap(), &cfg.hash(), 2048, ChunkOverride::Auto).unwrap();
    assert!(cache.train_label_onehot().is_none());
    let test = view.rows_input::<f64>(&data, &data.test_indices()).unwrap();
    let cached = predict_cached(&cache, &w, &test, &cfg.hash(), None).unwrap();
    assert!(cached.max_abs_diff(&cold.predictions) < 1e-6);
}

#[test]
fn cache_is_deterministic_and_round_trips() {
    let data = dataset("micro-cls", 41);
    let cfg = &build_estimator_configs(1, data.n_features(), 500, 1)[0];
    let view = FittedView::fit(&data, cfg).unwrap();
    let w = Weights::<f32>::init(&ModelConfig::micro(Task::Classification), 42).unwrap();
    let train = view.train_input::<f32>(&data).unwrap();
    let a = build_kv_cache(&w, &train, &cfg.hash(), 2048, ChunkOverride::Auto).unwrap();
    let b = build_kv_cache(&w, &train, &cfg.hash(), 2048, ChunkOverride::Auto).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    let back = KvCache::<f32>::read(a.to_bytes().as_slice()).unwrap();
    assert_eq!(back, a);

    let test = view.rows_input::<f32>(&data, &data.test_indices()).unwrap();
    assert!(matches!(
        predict_cached(&a, &w, &test, "other", None),
        Err(Error::CacheMismatch(_))
    ));
    let other_w = Weights::<f32>::init(&ModelConfig::small(Task::Classification), 42).unwrap();
    assert!(matches!(
        predict_cached(&a, &other_w, &test, &cfg.hash(), None),
        Err(Error::CacheMismatch(_))
    ));
}

#[test]
fn cached_rows_are_independent() {
    let data = dataset("micro-cls", 51);
    let cfg = &build_estimator_configs(1, data.n_features(), 500, 2)[0];
    let view = FittedView::fit(&data, cfg).unwrap();
    let w = micro(Task::Classification, 52);
    let cache = build_kv_cache(&w, &view.train_input(&data).unwrap(), &cfg.hash(), 2048, ChunkOverride::Auto).unwrap();
    let target = data.test_indices()[0];
    let single = view.rows_input::<f64>(&data, &[target]).unwrap();
    let one = predict_cached(&cache, &w, &single, &cfg.hash(), None).unwrap();
    let mut rows: Vec<usize> = (0..100).map(|i| i % data.n_rows()).collect();
    rows[37] = target;
    let batch = view.rows_input::<f64>(&data, &rows).unwrap();
    let many = predict_cached(&cache, &w, &batch, &cfg.hash(), None).unwrap();
    assert!(max_diff(&probs(&one)[0], &probs(&many)[37]) < 1e-6);
    let twice = view.rows_input::<f64>(&data, &[target, target]).unwrap();
    let p = predict_cached(&cache, &w, &twice, &cfg.hash(), None).unwrap();
    assert_eq!(probs(&p)[0], probs(&p)[1]);
}

#[test]
fn cache_estimate_matches_stored_bytes() {
    let c = ModelConfig::micro(Task::Classification);
    let data = dataset("micro-cls", 61);
    let cfg = &build_estimator_configs(1, data.n_features(), 500, 4)[0];
    let view = FittedView::fit(&data, cfg).unwrap();
    let w = Weights::<f32>::init(&c, 62).unwrap();
    let cache = build_kv_cache(&w, &view.train_input(&data).unwrap(), &cfg.hash(), 2048, ChunkOverride::Auto).unwrap();
    let est = estimate_cache_bytes(&c, cache.n_train() as u64, view.n_view_features(), 4);
    assert_eq!(est, cache.nbytes() as u64);
}

fn explicit_average(configs: &[tfe_core::preprocess::EstimatorConfig], w: &Weights<f64>, data: &tfe_core::dataset::Dataset) -> Vec<Vec<f64>> {
    let mut acc: Option<Vec<Vec<f64>>> = None;
    for cfg in configs {
        let view = FittedView::fit(data, cfg).unwrap();
        let out = forward(w, &view.model_input::<f64>(data).unwrap()).unwrap();
        let p: Vec<Vec<f64>> = probs(&out.predictions).iter().map(|r| view.unpermute(r)).collect();
        acc = Some(match acc {
            None => p,
            Some(a) => a.iter().zip(&p).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect(),
        });
    }
    let n = configs.len() as f64;
    acc.unwrap().into_iter().map(|r| r.into_iter().map(|v| v / n).collect()).collect()
}

#[test]
fn ensemble_is_the_explicit_average() {
    let data = dataset("small-cls", 71);
    let w = micro(Task::Classification, 72);
    let configs = build_estimator_configs(4, data.n_features(), 6, 73);
    let opts = EnsembleOptions::default();
    let ens = ensemble_predict(&configs, &w, &data, &opts).unwrap();
    let oracle = explicit_average(&configs, &w, &data);
    assert!(max_diff_rows(probs(&ens), &oracle) < 1e-10);
    for row in probs(&ens) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&p| p >= 0.0));
    }
    let par = ensemble_predict(&configs, &w, &data, &EnsembleOptions { parallel: true, ..opts }).unwrap();
    assert_eq!(par, ens);

    let single = ensemble_predict(&configs[..1], &w, &data, &opts).unwrap();
    assert!(max_diff_rows(probs(&single), &explicit_average(&configs[..1], &w, &data)) < 1e-12);
    let twin = ensemble_predict(&[configs[0].clone(), configs[0].clone()], &w, &data, &opts).unwrap();
    assert!(max_diff_rows(probs(&twin), probs(&single)) < 1e-12);
}

#[test]
fn regression_ensemble_is_a_valid_mixture() {
    let data = dataset("small-reg", 81);
    let w = micro(Task::Regression, 82);
    let configs = build_estimator_configs(3, data.n_features(), 6, 83);
    let Predictions::Bars(bars) = ensemble_predict(&configs, &w, &data, &EnsembleOptions::default()).unwrap() else {
        panic!("expected bars")
    };
    assert_eq!(bars.len(), data.test_indices().len());
    for b in &bars {
        assert!((b.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for q in [0.1, 0.5, 0.9] {
            let x = decode_quantile(b, q).unwrap();
            assert!((b.cdf(x) - q).abs() < 1e-9);
        }
    }
}
