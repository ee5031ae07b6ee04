//! Runs a small seeded sweep and writes `results.csv` into a temporary directory.

use mpobm::hamiltonian::EstimatorKind;
use mpobm::harness::{run_sweep, worker_count, ExperimentConfig};
use mpobm::TargetKind;

fn main() -> mpobm::Result<()> {
    let dir = std::env::temp_dir().join("mpobm-sweep-example");
    let mut cfg = ExperimentConfig::new(TargetKind::Gmm3);
    cfg.dims = vec![2, 3];
    cfg.k = 3;
    cfg.estimators = vec![EstimatorKind::Global, EstimatorKind::Local];
    cfg.budgets = vec![200, 2000];
    cfg.seeds = vec![43, 44];
    cfg.kl_samples = 2000;
    cfg.out = dir.clone();
    let rows = run_sweep(&cfg, worker_count())?;
    for r in &rows {
        println!("D={} {:<6} B={:<5} seed={} KL={:.4} bonds={:?}", r.dim, r.estimator.name(), r.budget, r.seed, r.kl, r.bonds);
    }
    println!("wrote {}", dir.join("results.csv").display());
    Ok(())
}
