use mpobm::hamiltonian::EstimatorKind;
use mpobm::harness::{run_fit, run_sweep, Cell, ExperimentConfig, RESULT_COLUMNS};
use mpobm::persist::{load_hamiltonian, load_mpo, save_hamiltonian, save_mpo, Provenance};
use mpobm::TargetKind;
use std::process::Command;

fn small_config(kind: TargetKind, out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.dims = vec![3];
    cfg.k = 3;
    cfg.budgets = vec![150];
    cfg.estimators = vec![EstimatorKind::Local, EstimatorKind::Global];
    cfg.seeds = vec![43, 44];
    cfg.kl_samples = 2000;
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn sweep_rows_do_not_depend_on_worker_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let one = run_sweep(&small_config(TargetKind::Gmm3, a.path()), 1).unwrap();
    let three = run_sweep(&small_config(TargetKind::Gmm3, b.path()), 3).unwrap();
    assert_eq!(one.len(), 4);
    let fp = |rows: &[mpobm::harness::ResultRow]| rows.iter().map(|r| r.numeric_fingerprint()).collect::<Vec<_>>();
    assert_eq!(fp(&one), fp(&three));
    let text = std::fs::read_to_string(a.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULT_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn sweeps_append_under_one_header() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(TargetKind::GaussianTridiag, dir.path());
    cfg.estimators = vec![EstimatorKind::Local];
    cfg.seeds = vec![43];
    run_sweep(&cfg, 2).unwrap();
    run_sweep(&cfg, 2).unwrap();
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("run_id")).count(), 1);
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn fitted_artifacts_reload_and_evaluate_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(TargetKind::Funnel, dir.path());
    let cell = Cell {
        dim: 3,
        estimator: EstimatorKind::Local,
        budget: 150,
        seed: 43,
    };
    let out = run_fit(&cfg, cell).unwrap();
    let stem = dir.path().join("fit");
    let prov = Provenance::new(cfg.hash(), 43);
    let mpo = out.model.mpo().unwrap();
    save_mpo(mpo, cfg.err, cfg.max_bond, &stem.with_extension("mpo"), Some(prov.clone())).unwrap();
    save_hamiltonian(&out.hamiltonian, &stem.with_extension("h"), Some(prov.clone())).unwrap();

    let (back, header) = load_mpo(&stem.with_extension("mpo")).unwrap();
    assert_eq!(&back, mpo);
    assert_eq!(header.provenance, Some(prov.clone()));
    let (h, p) = load_hamiltonian(&stem.with_extension("h")).unwrap();
    assert_eq!(p, Some(prov));
    assert_eq!(h.to_dense().unwrap(), out.hamiltonian.to_dense().unwrap());
}

#[test]
fn cli_fit_writes_artifacts_and_a_row() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_mpobm"))
        .args(["fit", "--target", "gaussian", "--dims", "2", "-K", "3", "-r", "1"])
        .args(["--estimator", "local", "--budget", "100", "--kl-samples", "500", "--seeds", "7"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert_eq!(row.split(',').count(), RESULT_COLUMNS.len());
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n.ends_with(".mpo.json")), "{names:?}");
    assert!(names.iter().any(|n| n.ends_with(".h.bin")), "{names:?}");
}

#[test]
fn cli_rejects_zero_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mpobm"))
        .args(["fit", "--target", "gaussian", "--dims", "2", "--budget", "0"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn cli_hardness_reports_every_formula() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mpobm"))
        .args(["hardness", "--formula", "x1 & !x2", "--formula", "x1 & !x1", "--samples", "4000"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("hardness.json")).unwrap()).unwrap();
    assert_eq!(json["reports"].as_array().unwrap().len(), 2);
    assert_eq!(json["all_correct"], true);
}
