//! Smallest budget reaching a KL threshold, per dimension and estimator,
//! with the fitted exponential and power laws.

use mpobm::hamiltonian::EstimatorKind;
use mpobm::harness::{run_scaling, worker_count, ExperimentConfig, SCALING_BUDGETS};
use mpobm::TargetKind;

fn main() -> mpobm::Result<()> {
    let mut cfg = ExperimentConfig::new(TargetKind::GaussianTridiag);
    cfg.dims = vec![2, 3, 4, 5];
    cfg.k = 2;
    cfg.r = 1;
    cfg.estimators = vec![EstimatorKind::Global, EstimatorKind::Local];
    cfg.budgets = SCALING_BUDGETS.to_vec();
    cfg.seeds = vec![43, 44, 45];
    cfg.out = std::env::temp_dir().join("mpobm-scaling-example");
    let report = run_scaling(&cfg, worker_count())?;
    for p in &report.points {
        let req = p.required_budget.map_or("not reached".to_string(), |b| b.to_string());
        println!("{:<6} D={} required B = {req}", p.estimator.name(), p.dim);
    }
    for f in &report.fits {
        match &f.fit {
            Some(fit) => println!("{:<6} {:?}: a={:.3} b={:.3} R^2={:.3}", f.estimator.name(), fit.law, fit.a, fit.b, fit.r2),
            None => println!("{:<6} {}", f.estimator.name(), f.notice.as_deref().unwrap_or("")),
        }
    }
    Ok(())
}
