use dpl::data::{gen_synthetic, simulate_missing, train_test_split, Scenario, Task};
use dpl::harness::{self, derive_seeds, emit_results, run_experiment_with, ExperimentConfig, RunResult};
use dpl::heads::{evaluate, predict, DplHead, Head, HeadRegistry, HeadShape, MetricKind, Routing};
use dpl::{ComponentKey, Error, MissingPattern, Modality, PrototypeBank, SyntheticSpec};
use serde_json::json;

fn small_data() -> serde_json::Value {
    json!({"synthetic": {"n_per_class": 30}})
}

fn config(extra: serde_json::Value) -> ExperimentConfig {
    let mut base = json!({
        "task": "multiclass", "head": "dpl", "scenario": "mixed",
        "train_eta": 0.5, "test_eta": 0.5, "n_seeds": 2,
        "optim": {"epochs": 2}, "data": small_data()
    });
    for (k, v) in extra.as_object().unwrap() {
        base[k] = v.clone();
    }
    ExperimentConfig::from_value(base).unwrap()
}

fn run(c: &ExperimentConfig) -> Vec<RunResult> {
    run_experiment_with(c, &HeadRegistry::with_builtins(), Some(2)).unwrap()
}

#[test]
fn zero_epochs_equals_evaluating_the_initial_bank() {
    let c = config(json!({"n_seeds": 1, "optim": {"epochs": 0}}));
    let got = run(&c);
    assert_eq!(got.len(), 1);

    let seeds = derive_seeds(c.master_seed, 0);
    let data = gen_synthetic(&SyntheticSpec { n_per_class: 30, ..SyntheticSpec::default() }).unwrap();
    let (_, test) = train_test_split(&data.samples, c.test_fraction, seeds.split).unwrap();
    let test = simulate_missing(&test, Scenario::Mixed, 0.5, seeds.test_missing).unwrap();
    let head = DplHead { bank: PrototypeBank::init(4, 16, seeds.init).unwrap() };
    let expected = evaluate(&head, &test, Task::Multiclass, Routing::MissingAware, MetricKind::Top1).unwrap();
    assert_eq!(got[0].value.to_bits(), expected.value.to_bits());
    assert_eq!(got[0].seed, seeds.run);
}

#[test]
fn seed_sweep_shares_fingerprint_and_covers_the_grid() {
    let c = config(json!({"n_seeds": 10, "optim": {"epochs": 1}}));
    let results = run(&c);
    assert_eq!(results.len(), 10);
    let seeds: std::collections::BTreeSet<u64> = results.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 10);
    assert!(results.iter().all(|r| r.fingerprint == results[0].fingerprint));
    for (i, r) in results.iter().enumerate() {
        assert_eq!(r.seed, derive_seeds(c.master_seed, i as u64).run);
        assert!((0.0..=1.0).contains(&r.value));
    }

    let grid = config(json!({
        "head": ["dpl", "fc"], "scenario": ["mixed", "text_missing_only"],
        "train_eta": [0.0, 0.7], "test_eta": [0.3, 0.7], "n_seeds": 3, "optim": {"epochs": 1}
    }));
    let results = run(&grid);
    assert_eq!(results.len(), grid.grid().len() * 3);
    assert_eq!(grid.grid().len(), 16);
    let fps: std::collections::BTreeSet<&str> = results.iter().map(|r| r.fingerprint.as_str()).collect();
    assert_eq!(fps.len(), 16);
}

/// Complete prototypes from a normal init; every missing-pattern component
/// is the same vector for all classes, so those logits are uniform.
fn uniform_missing_head(shape: &HeadShape) -> dpl::Result<Box<dyn Head>> {
    let mut bank = PrototypeBank::init(shape.classes, shape.image_dim, shape.seed)?;
    let flat = vec![1.0; shape.image_dim];
    for k in 0..shape.classes {
        for p in [MissingPattern::ImageMissing, MissingPattern::TextMissing] {
            for m in Modality::ALL {
                bank.set_component(&ComponentKey::new(k, p, m), &flat)?;
            }
        }
    }
    Ok(Box::new(DplHead { bank }))
}

#[test]
fn routing_toggle_is_inert_when_wrong_patterns_are_uniform() {
    let shape = HeadShape { classes: 4, image_dim: 16, text_dim: 16, seed: 9 };
    let head = uniform_missing_head(&shape).unwrap();
    let data = gen_synthetic(&SyntheticSpec { n_per_class: 30, ..SyntheticSpec::default() }).unwrap();
    let samples = simulate_missing(&data.samples, Scenario::Mixed, 0.5, 2).unwrap();
    let decide = |r| -> Vec<usize> {
        predict(head.as_ref(), &samples, r).unwrap().iter().map(|l| dpl::scoring::decide_multiclass(&l.values)).collect()
    };
    assert_eq!(decide(Routing::MissingAware), decide(Routing::MinEntropy));

    let mut registry = HeadRegistry::with_builtins();
    registry.register("uniform_missing", uniform_missing_head);
    let values: Vec<f64> = [true, false]
        .into_iter()
        .map(|aware| {
            let c = config(json!({"head": "uniform_missing", "missing_aware": aware, "optim": {"epochs": 0}}));
            run_experiment_with(&c, &registry, Some(1)).unwrap()[0].value
        })
        .collect();
    assert_eq!(values[0], values[1]);
}

#[test]
fn emitted_files_are_stable_and_summarized() {
    let results = run(&config(json!({"head": ["dpl", "fc"], "n_seeds": 3})));
    let dir = tempfile::tempdir().unwrap();
    let (rows_path, summary_path) = emit_results(&results, dir.path()).unwrap();
    let first = (std::fs::read(&rows_path).unwrap(), std::fs::read(&summary_path).unwrap());
    emit_results(&results, dir.path()).unwrap();
    assert_eq!(first, (std::fs::read(&rows_path).unwrap(), std::fs::read(&summary_path).unwrap()));

    let mut reader = csv::Reader::from_path(&rows_path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["fingerprint", "seed", "head", "scenario", "train_eta", "test_eta", "missing_aware", "metric", "value", "wall_time"]
    );
    assert_eq!(reader.records().count(), 6);

    let mut reader = csv::Reader::from_path(&summary_path).unwrap();
    let header = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for row in &rows {
        let head = &row[col("head")];
        let values: Vec<f64> = results.iter().filter(|r| r.head == head).map(|r| r.value).collect();
        let mean: f64 = row[col("mean")].parse().unwrap();
        assert!((mean - values.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        assert_eq!(&row[col("n")], "3");
    }

    let constant: Vec<RunResult> = (0..10).map(|i| RunResult { seed: i, value: 0.7, ..results[0].clone() }).collect();
    let s = harness::summarize(&constant.iter().map(|r| r.value).collect::<Vec<_>>()).unwrap();
    assert_eq!((s.mean, s.std), (0.7, 0.0));
    assert!(matches!(emit_results(&[], dir.path()), Err(Error::ConfigInvalid(_))));
}

#[test]
fn artifacts_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(json!({
        "head": ["dpl", "fc"], "n_seeds": 1, "output_dir": dir.path(),
        "save_history": true, "save_checkpoints": true, "record_wall_time": true
    }));
    let results = run(&c);
    assert!(results.iter().all(|r| r.wall_time_seconds > 0.0));
    let count = |sub: &str| std::fs::read_dir(dir.path().join(sub)).map(|d| d.count()).unwrap_or(0);
    assert_eq!(count("history"), 2);
    // Only the prototype head has a checkpoint format.
    assert_eq!(count("checkpoints"), 1);
}

#[test]
fn data_and_config_errors_are_categorized() {
    let c = config(json!({"data": {"features": {"path": "/nonexistent/x.dplf"}}}));
    let err = run_experiment_with(&c, &HeadRegistry::with_builtins(), None).unwrap_err();
    assert!(matches!(err, Error::DataUnavailable { .. }));
    assert_eq!(err.exit_code(), 3);

    let c = config(json!({"task": "multilabel"}));
    let err = run_experiment_with(&c, &HeadRegistry::with_builtins(), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    let c = config(json!({"head": "svm"}));
    assert!(matches!(run_experiment_with(&c, &HeadRegistry::with_builtins(), None), Err(Error::UnknownHead(_))));
}
