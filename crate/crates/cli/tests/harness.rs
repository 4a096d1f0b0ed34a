use std::fs;
use std::path::PathBuf;

use hypertune::config::{DatasetSpec, ExperimentConfig, StrategyChoice};
use hypertune::export::{write_traces, TRACE_COLUMNS};
use hypertune::registry::{build_objective, load_dataset, registry_lookup};
use hypertune::report::compare;
use hypertune::runner::{artifact_path, load_artifacts, run_experiment, timing_path, RunArtifact, TOOL_VERSION};
use hypertune::HarnessError;
use hypertune_core::evalstat::UTestMethod;
use hypertune_core::{Configuration, ParamValue, Trace};
use serde_json::{json, Map};

fn cfg(bench: &str, strategy: StrategyChoice, budget: usize, seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig::new(bench, strategy, budget, seeds)
}

fn small_als() -> DatasetSpec {
    let mut m = Map::new();
    for (k, v) in [("m", json!(30)), ("n", json!(20)), ("density", json!(0.4))] {
        m.insert(k.into(), v);
    }
    DatasetSpec::Synthetic(m)
}

#[test]
fn writes_one_artifact_per_seed_and_timing_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("testfn-bowl", StrategyChoice::Random, 6, vec![3, 8]);
    let arts = run_experiment(&c, dir.path()).unwrap();
    assert_eq!(arts.len(), 2);
    for s in [3, 8] {
        assert!(artifact_path(dir.path(), "testfn-bowl", StrategyChoice::Random, s).is_file());
        assert!(timing_path(dir.path(), "testfn-bowl", StrategyChoice::Random, s).is_file());
    }
    let files: Vec<_> = fs::read_dir(dir.path().join("testfn-bowl/random")).unwrap().collect();
    assert_eq!(files.len(), 4);
    assert_eq!(arts[0].tool_version, TOOL_VERSION);
    assert_eq!(arts[0].trace.len(), 6);
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut c = cfg("als", StrategyChoice::Bayes, 6, vec![1, 2]);
    c.dataset = small_als();
    run_experiment(&c, a.path()).unwrap();
    run_experiment(&c, b.path()).unwrap();
    // and an idempotent overwrite in place
    run_experiment(&c, a.path()).unwrap();
    for s in [1, 2] {
        let pa = artifact_path(a.path(), "als", StrategyChoice::Bayes, s);
        let pb = artifact_path(b.path(), "als", StrategyChoice::Bayes, s);
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
    }
}

#[test]
fn best_config_validates_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg("als", StrategyChoice::Random, 5, vec![4]);
    c.dataset = small_als();
    run_experiment(&c, dir.path()).unwrap();
    let art = load_artifacts(&[dir.path().to_path_buf()]).unwrap().remove(0);
    let entry = registry_lookup("als").unwrap();
    let best = art.best_config.clone().unwrap();
    assert!(entry.space.is_valid(&best));
    let obj = build_objective("als", load_dataset("als", &c.dataset).unwrap(), c.objective_seed).unwrap();
    assert_eq!(obj(&best).unwrap(), art.trace.final_best().unwrap());
}

#[test]
fn overrides_are_held_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg("testfn-rosenbrock", StrategyChoice::Bayes, 8, vec![0]);
    c.overrides = Configuration::new().with("y", ParamValue::Real(1.0));
    let art = run_experiment(&c, dir.path()).unwrap().remove(0);
    assert!(art.trace.observations.iter().all(|o| o.config.real("y").unwrap() == 1.0));
    assert!(registry_lookup("testfn-rosenbrock").unwrap().space.is_valid(art.best_config.as_ref().unwrap()));
}

#[test]
fn default_strategy_evaluates_untuned_config_once() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("testfn-bowl", StrategyChoice::Default, 40, vec![0, 1]);
    let arts = run_experiment(&c, dir.path()).unwrap();
    for a in &arts {
        assert_eq!(a.trace.len(), 1);
        assert_eq!(a.best_config.as_ref(), Some(&registry_lookup("testfn-bowl").unwrap().untuned));
        assert_eq!(a.trace.final_best(), Some(-(1.5f64 * 1.5 + 2.0 * 2.0) / 2.0));
    }
}

#[test]
fn unwritable_output_fails_before_evaluating() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let c = cfg("testfn-bowl", StrategyChoice::Random, 3, vec![0]);
    let err = run_experiment(&c, &blocker).unwrap_err();
    assert!(matches!(err, HarnessError::Unwritable { .. }), "{err}");
}

#[test]
fn grid_exhaustion_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg("als", StrategyChoice::Grid, 10_000, vec![0]);
    c.dataset = small_als();
    c.overrides = Configuration::new()
        .with("log_lambda", ParamValue::Real(-1.0))
        .with("T", ParamValue::Int(2));
    let art = run_experiment(&c, dir.path()).unwrap().remove(0);
    assert_eq!(art.trace.len(), 32);
    assert!(art.trace.halted.is_some());
}

fn artifact(bench: &str, strategy: StrategyChoice, budget: usize, seed: u64, values: &[f64]) -> RunArtifact {
    let mut trace = Trace::new(strategy.as_str(), seed);
    for (i, &v) in values.iter().enumerate() {
        trace.push(Configuration::new().with("x", ParamValue::Real(i as f64)), Ok(v), -1.0, 0.0);
    }
    let best_config = trace.best_observation().map(|o| o.config.clone());
    RunArtifact {
        tool_version: TOOL_VERSION.into(),
        config: cfg(bench, strategy, budget, vec![seed]),
        seed,
        trace,
        best_config,
    }
}

#[test]
fn compare_against_itself() {
    let arts: Vec<_> = (0..5).map(|s| artifact("testfn-bowl", StrategyChoice::Random, 3, s, &[-(s as f64), -1.0, -2.0])).collect();
    let r = compare(&arts, None, 0.05).unwrap().remove(0);
    assert_eq!(r.baseline, "random");
    assert_eq!(r.strategies[0].improvement_pct, Some(0.0));
    let p = hypertune_core::evalstat::mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(p.p_two_sided, 1.0);
}

#[test]
fn disjoint_strategies_give_exact_p() {
    let mut arts = Vec::new();
    for s in 0..4 {
        arts.push(artifact("testfn-bowl", StrategyChoice::Bayes, 2, s, &[-1.0, -(s as f64) * 0.1]));
        arts.push(artifact("testfn-bowl", StrategyChoice::Random, 2, s, &[-5.0 - s as f64, -9.0]));
    }
    let r = compare(&arts, Some("random"), 0.05).unwrap().remove(0);
    let names: Vec<&str> = r.strategies.iter().map(|s| s.strategy.as_str()).collect();
    assert_eq!(names, vec!["bayes", "random"]);
    let pw = &r.pairwise[0];
    assert_eq!(pw.method, UTestMethod::Exact);
    // complete separation of 4 vs 4: 2 of C(8,4) = 70 splits are as extreme
    assert!((pw.p_two_sided - 2.0 / 70.0).abs() < 1e-12);
    assert!(pw.significant);
    assert_eq!(pw.u_statistic, 16.0);
}

#[test]
fn mismatched_budgets_fault() {
    let arts = vec![
        artifact("sgd", StrategyChoice::Random, 3, 0, &[0.5, 0.6, 0.7]),
        artifact("sgd", StrategyChoice::Bayes, 4, 0, &[0.5, 0.6, 0.7, 0.8]),
        artifact("sgd", StrategyChoice::Default, 1, 0, &[0.4]),
    ];
    assert!(matches!(compare(&arts, None, 0.05), Err(HarnessError::BudgetMismatch { .. })));
    // the default baseline is exempt
    let ok = compare(&[arts[0].clone(), arts[2].clone()], None, 0.05).unwrap().remove(0);
    assert_eq!(ok.baseline, "default");
    assert!((ok.strategies[0].improvement_pct.unwrap() - 75.0).abs() < 1e-9);
}

#[test]
fn missing_baseline_is_an_error() {
    let arts = vec![artifact("sgd", StrategyChoice::Random, 1, 0, &[0.5])];
    assert!(matches!(compare(&arts, Some("grid"), 0.05), Err(HarnessError::MissingBaseline(_))));
}

#[test]
fn export_rows_order_and_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_path_buf();
    run_experiment(&cfg("testfn-bowl", StrategyChoice::Random, 5, vec![2, 1]), &out).unwrap();
    run_experiment(&cfg("testfn-bowl", StrategyChoice::Bayes, 5, vec![1]), &out).unwrap();
    let arts = load_artifacts(&[out.clone()]).unwrap();
    let mut buf = Vec::new();
    let rows = write_traces(&arts, &mut buf).unwrap();
    assert_eq!(rows, 15);

    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), TRACE_COLUMNS);
    let recs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 15);
    let keys: Vec<(String, u64, usize)> = recs
        .iter()
        .map(|r| (r[1].to_string(), r[2].parse().unwrap(), r[3].parse().unwrap()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for w in recs.windows(2) {
        if w[0][1] == w[1][1] && w[0][2] == w[1][2] {
            let (a, b): (f64, f64) = (w[0][5].parse().unwrap(), w[1][5].parse().unwrap());
            assert!(b >= a);
        }
    }
    // values parse back to the persisted floats exactly
    let first = arts.iter().find(|a| a.config.strategy == StrategyChoice::Bayes).unwrap();
    let v: f64 = recs[0][4].parse().unwrap();
    assert_eq!(v, first.trace.observations[0].value);
}

#[test]
fn load_rejects_missing_directory() {
    let r = load_artifacts(&[PathBuf::from("/definitely/not/here")]);
    assert!(r.is_err());
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_artifacts(&[empty.path().to_path_buf()]), Err(HarnessError::NoArtifacts(_))));
}

#[test]
fn twenty_seeds_of_sixty_evaluations() {
    let dir = tempfile::tempdir().unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let arts = run_experiment(&cfg("testfn-bowl", StrategyChoice::Random, 60, seeds), dir.path()).unwrap();
    assert_eq!(arts.len(), 20);
    assert!(arts.iter().all(|a| a.trace.len() == 60));
}
