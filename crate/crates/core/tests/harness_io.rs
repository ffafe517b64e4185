use std::fs;

use netnewton::harness::{self, ExperimentConfig, Scenario, ScenarioResult};
use netnewton::objectives::LogisticDataset;
use netnewton::prelude::*;

fn small(scenario: Scenario) -> ExperimentConfig {
    ExperimentConfig { n: 12, max_iters: 60, realizations: 4, ..ExperimentConfig::defaults(scenario) }
}

#[test]
fn traces_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Scenario::LogisticSeparable);
    let (result, _) = harness::run_scenario(&cfg, dir.path()).unwrap();
    let ScenarioResult::Fixed(res) = result else { panic!("fixed result expected") };
    for run in &res.runs {
        let back = harness::read_trace(dir.path().join(harness::trace_file_name(run.method))).unwrap();
        assert_eq!(back, run.outcome.trace);
    }
}

#[test]
fn adaptive_traces_round_trip_with_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { alpha0_list: vec![1e-2], ..small(Scenario::AnnSweep) };
    let (result, _) = harness::run_scenario(&cfg, dir.path()).unwrap();
    let ScenarioResult::Ann(res) = result else { panic!("adaptive result expected") };
    for run in &res.runs {
        let outcome = run.outcome.as_ref().unwrap();
        let path = dir.path().join(harness::ann_trace_file_name(run.alpha0, run.method));
        let back = harness::read_trace(path).unwrap();
        assert_eq!(&back, &outcome.trace);
        let stages: Vec<usize> = back.records.iter().map(|r| r.stage).collect();
        assert!(stages.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*stages.last().unwrap(), cfg.outer_rounds - 1);
    }
}

#[test]
fn every_scenario_is_deterministic() {
    for sc in Scenario::ALL {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = small(sc);
        let (_, files_a) = harness::run_scenario(&cfg, a.path()).unwrap();
        let (_, files_b) = harness::run_scenario(&cfg, b.path()).unwrap();
        assert_eq!(files_a.len(), files_b.len());
        for (fa, fb) in files_a.iter().zip(&files_b) {
            assert_eq!(fa.file_name(), fb.file_name());
            assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{sc}: {}", fa.display());
        }
    }
}

#[test]
fn config_file_overrides_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, "scenario = \"quadratic_fixed\"\nn = 16\nk_list = [1]\ninclude_dgd = false\nmax_iters = 25\n").unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(harness::methods(&cfg), vec![Method::NetworkNewton(1)]);
    let out = dir.path().join("out");
    let (_, written) = harness::run_scenario(&cfg, &out).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"trace_NN-1.csv".to_string()));
    assert!(!names.contains(&"trace_DGD.csv".to_string()));
    assert_eq!(ExperimentConfig::load(out.join(harness::CONFIG_SNAPSHOT)).unwrap(), cfg);
}

#[test]
fn histogram_rows_cover_every_realization() {
    let cfg = ExperimentConfig { target_error: 0.3, ..small(Scenario::QuadraticHistogram) };
    let res = harness::run_histogram(&cfg).unwrap();
    assert_eq!(res.rows.len(), cfg.realizations * 4);
    for (r, chunk) in res.rows.chunks(4).enumerate() {
        assert!(chunk.iter().all(|row| row.realization == r && row.seed == cfg.seed + r as u64));
        assert!(chunk.iter().all(|row| row.degree == chunk[0].degree && cfg.degree_set.contains(&row.degree)));
        for row in chunk {
            if let Some(t) = row.iterations {
                assert_eq!(row.exchanges, Some(row.method.exchanges_per_iteration() * t as u64));
            }
        }
    }
    let csv = harness::histogram_rows_csv(&res);
    assert_eq!(csv.lines().count(), res.rows.len() + 1);
}

#[test]
fn censored_realizations_are_recorded() {
    let cfg = ExperimentConfig { target_error: 1e-9, max_iters: 5, ..small(Scenario::QuadraticHistogram) };
    let res = harness::run_histogram(&cfg).unwrap();
    assert!(res.rows.iter().all(|r| r.iterations.is_none() && r.exchanges.is_none()));
    for s in &res.summary {
        assert_eq!((s.converged, s.censored), (0, cfg.realizations));
        assert_eq!(s.mean_exchanges, None);
    }
}

#[test]
fn logistic_dataset_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Scenario::LogisticNonseparable);
    let data = harness::logistic_dataset(&cfg).unwrap();
    let path = dir.path().join("data.csv");
    data.write_csv(&path).unwrap();
    assert_eq!(LogisticDataset::read_csv(&path).unwrap(), data);
}

#[test]
fn divergence_propagates_from_fixed_runs() {
    let cfg = ExperimentConfig { alpha: 0.1, k_list: vec![], ..small(Scenario::QuadraticFixed) };
    let cfg = ExperimentConfig { max_iters: 400, ..cfg };
    let err = harness::run_fixed_quadratic(&cfg).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}
