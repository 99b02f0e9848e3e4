use std::collections::BTreeSet;
use std::path::Path;

use vqabench::cost::CvarAlpha;
use vqabench::harness::{
    analyze, emit_quality_diagram_data, read_records, run_experiment, run_single, write_records,
    write_tables, Experiment, ExperimentConfig, QuboSource, RunOptions, RunRecord,
    PARTIAL_RECORDS_FILE, RECORDS_FILE, TIMINGS_FILE,
};
use vqabench::metrics::{RunOutcome, Verdict};
use vqabench::optimizer::OptimizerSettings;

fn alpha(a: f64) -> CvarAlpha {
    CvarAlpha::new(a).unwrap()
}

/// 2 alphas x 2 shots x 3 runs on a 4-variable instance.
fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.qubo = QuboSource::Random {
        dimension: 4,
        seed: 9,
        value_range: (-1.0, 1.0),
    };
    cfg.ansatz.n_qubits = 4;
    cfg.shots_grid = vec![50, 200];
    cfg.runs_per_config = 3;
    cfg.optimizer.n_max = 80;
    cfg
}

fn run(cfg: &ExperimentConfig, dir: &Path, workers: usize, resume: bool) -> Vec<RunRecord> {
    let exp = Experiment::prepare(cfg.clone()).unwrap();
    run_experiment(&exp, dir, RunOptions { workers, resume })
        .unwrap()
        .records
}

#[test]
fn run_single_is_deterministic() {
    let exp = Experiment::prepare(small_config()).unwrap();
    let a = run_single(&exp, alpha(0.25), 50, 2);
    let b = run_single(&exp, alpha(0.25), 50, 2);
    assert_eq!(a.outcome, b.outcome);
    assert_eq!(a.seed, b.seed);
    assert_ne!(a.seed, run_single(&exp, alpha(0.25), 50, 3).seed);
}

#[test]
fn budget_of_k_plus_two_is_respected() {
    let mut cfg = small_config();
    let k = cfg.ansatz.num_params();
    cfg.optimizer = OptimizerSettings {
        n_max: k + 2,
        ..OptimizerSettings::default()
    };
    let exp = Experiment::prepare(cfg).unwrap();
    let r = run_single(&exp, alpha(1.0), 50, 0);
    assert_eq!(r.outcome.unwrap().n_calls, k + 2);
    assert_eq!(r.n_max, k + 2);
}

#[test]
fn zero_qubo_is_always_solved() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    vqabench::qubo::QuboInstance::zeros(3).unwrap().save(&path).unwrap();
    let mut cfg = small_config();
    cfg.qubo = QuboSource::File { path };
    cfg.ansatz.n_qubits = 3;
    let exp = Experiment::prepare(cfg).unwrap();
    let r = run_single(&exp, alpha(0.5), 50, 0);
    assert!((r.outcome.unwrap().p_min - 1.0).abs() < 1e-12);
}

#[test]
fn grid_produces_one_record_per_task_in_canonical_order() {
    let dir = tempfile::tempdir().unwrap();
    let records = run(&small_config(), dir.path(), 2, false);
    assert_eq!(records.len(), 12);
    let keys: BTreeSet<_> = records.iter().map(RunRecord::key).collect();
    assert_eq!(keys.len(), 12);
    assert!(records.iter().all(|r| !r.is_error()));
    // wall_time is not persisted
    let cleared: Vec<_> = records
        .iter()
        .cloned()
        .map(|r| RunRecord { wall_time: 0.0, ..r })
        .collect();
    assert_eq!(read_records(&dir.path().join(RECORDS_FILE)).unwrap(), cleared);
    assert!(!dir.path().join(PARTIAL_RECORDS_FILE).exists());
    let timings = std::fs::read_to_string(dir.path().join(TIMINGS_FILE)).unwrap();
    assert_eq!(timings.lines().count(), 12);
}

#[test]
fn resume_recomputes_only_missing_runs() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, dir.path(), 1, false);
    let full = std::fs::read(dir.path().join(RECORDS_FILE)).unwrap();

    // simulate an interrupted run: half the records in a partial log with a
    // torn last line, no canonical file
    let records = read_records(&dir.path().join(RECORDS_FILE)).unwrap();
    std::fs::remove_file(dir.path().join(RECORDS_FILE)).unwrap();
    let partial = dir.path().join(PARTIAL_RECORDS_FILE);
    let kept: Vec<_> = records.iter().step_by(2).cloned().collect();
    write_records(&partial, &kept).unwrap();
    let mut text = std::fs::read_to_string(&partial).unwrap();
    text.push_str("{\"config_id\":\"a1-s");
    std::fs::write(&partial, text).unwrap();

    let exp = Experiment::prepare(cfg).unwrap();
    let summary = run_experiment(
        &exp,
        dir.path(),
        RunOptions {
            workers: 3,
            resume: true,
        },
    )
    .unwrap();
    assert_eq!(summary.reused, 6);
    assert_eq!(summary.computed, 6);
    assert_eq!(std::fs::read(dir.path().join(RECORDS_FILE)).unwrap(), full);
}

#[test]
fn worker_count_does_not_change_records() {
    let cfg = small_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&cfg, a.path(), 1, false);
    run(&cfg, b.path(), 8, false);
    assert_eq!(
        std::fs::read(a.path().join(RECORDS_FILE)).unwrap(),
        std::fs::read(b.path().join(RECORDS_FILE)).unwrap()
    );
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let exp = Experiment::prepare(small_config()).unwrap();
    let err = run_experiment(&exp, &blocker.join("out"), RunOptions::default()).unwrap_err();
    assert_eq!(err.kind(), "io");
}

fn synthetic(config_id: &str, outcomes: impl IntoIterator<Item = RunOutcome>) -> Vec<RunRecord> {
    let id = vqabench::harness::ConfigId::parse(config_id).unwrap();
    outcomes
        .into_iter()
        .enumerate()
        .map(|(i, o)| RunRecord {
            config_id: config_id.to_string(),
            alpha: id.alpha.value(),
            shots: id.shots,
            run_index: i,
            seed: 0,
            n_max: 101,
            outcome: Some(o),
            best_cost: None,
            error: None,
            wall_time: 0.0,
        })
        .collect()
}

#[test]
fn analyze_synthetic_records() {
    let cfg = ExperimentConfig::desk();
    // 280 of 400 runs clear p_threshold, each at q = 1 (u = 1, v = 0)
    let mut records = synthetic(
        "a1-s100",
        (0..400).map(|i| RunOutcome {
            n_calls: 101,
            p_min: if i < 280 { 1.0 } else { 0.0 },
        }),
    );
    // identical runs: one occupied cell
    records.extend(synthetic(
        "a0.25-s100",
        (0..50).map(|_| RunOutcome {
            n_calls: 11,
            p_min: 0.95,
        }),
    ));
    let analysis = analyze(&records, &cfg).unwrap();
    let get = |id: &str| {
        &analysis
            .reports
            .iter()
            .find(|r| r.report.config_id == id)
            .unwrap()
            .report
    };

    let mixed = get("a1-s100");
    assert!((mixed.feasibility.value - 0.70).abs() < 1e-12);
    assert!((mixed.feasibility.half_width - 0.0449).abs() < 1e-4);
    assert_eq!(mixed.feasibility.to_string(), "0.70 ± 0.04");

    let point = get("a0.25-s100");
    assert_eq!(point.reproducibility.value, 1.0);
    assert_eq!(point.reproducibility.half_width, 0.0);
    assert_eq!(point.feasibility.value, 1.0);
    // u = 0.1, v = 0.05 -> q = 1 / hypot(0.1, 0.1)
    assert!((point.quality.value - 1.0 / 0.02f64.sqrt()).abs() < 1e-9);
    assert_eq!(point.verdict, Verdict::Accepted);
    assert_eq!(analysis.selected, vec![(0.25, 100)]);

    // feasible, but mean quality 0.7 < 1.2
    assert_eq!(mixed.verdict, Verdict::RejectedQuality);

    let out = tempfile::tempdir().unwrap();
    write_tables(&analysis, out.path()).unwrap();
    let table = std::fs::read_to_string(out.path().join("feasibility.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "s\\alpha,0.25,1.00");
    assert_eq!(lines[1], "100,1.00 ± 0.00,0.70 ± 0.04");
}

#[test]
fn analyze_reports_configs_without_successful_runs() {
    let mut records = synthetic("a1-s10", [RunOutcome { n_calls: 1, p_min: 1.0 }]);
    records[0].outcome = None;
    records[0].error = Some("boom".into());
    let analysis = analyze(&records, &ExperimentConfig::desk()).unwrap();
    assert!(analysis.reports.is_empty());
    assert_eq!(analysis.failed.len(), 1);
    assert_eq!(analysis.failed[0].0, "a1-s10");
}

#[test]
fn quality_diagram_data() {
    let mut records = synthetic(
        "a1-s100",
        (0..20).map(|i| RunOutcome {
            n_calls: 1 + 5 * i,
            p_min: 1.0 - i as f64 / 20.0,
        }),
    );
    records.extend(synthetic("a0.5-s100", [RunOutcome { n_calls: 1, p_min: 0.0 }]));
    let data = emit_quality_diagram_data(&records, "a1-s100", 0.5).unwrap();
    assert_eq!(data.points.len(), 20);
    assert_eq!((data.points[0].u, data.points[0].v), (0.0, 0.0));
    assert_eq!(data.grid.iter().flatten().sum::<usize>(), 20);

    let q1 = data.level_curves.iter().find(|c| c.q == 1.0).unwrap();
    let end = q1.points.last().unwrap();
    assert!((end.u - 1.0).abs() < 1e-12 && end.v.abs() < 1e-12);
    assert!((q1.points[0].v - 0.5).abs() < 1e-12);

    assert_eq!(
        emit_quality_diagram_data(&records, "a0.75-s1", 0.5).unwrap_err().kind(),
        "invalid_input"
    );
}

#[test]
fn checked_in_configs_match_presets() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    assert_eq!(
        ExperimentConfig::load(&root.join("desk.json")).unwrap(),
        ExperimentConfig::desk()
    );
    assert_eq!(
        ExperimentConfig::load(&root.join("full.json")).unwrap(),
        ExperimentConfig::full_grid()
    );
}

#[test]
fn records_round_trip_floats_exactly() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let records = synthetic(
        "a0.5-s10",
        (0..2000).map(|_| RunOutcome {
            n_calls: 1,
            p_min: rng.random::<f64>().powi(7),
        }),
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(RECORDS_FILE);
    write_records(&path, &records).unwrap();
    assert_eq!(read_records(&path).unwrap(), records);
}
