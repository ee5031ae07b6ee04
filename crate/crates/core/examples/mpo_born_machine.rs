//! Fits a Born machine, compresses it to an MPO and queries it: point
//! densities, marginals, box probabilities and the model score.

use mpobm::harness::{run_fit, Cell, ExperimentConfig};
use mpobm::hamiltonian::EstimatorKind;
use mpobm::mpo::dense_bond_bound;
use mpobm::TargetKind;

fn main() -> mpobm::Result<()> {
    let mut cfg = ExperimentConfig::new(TargetKind::GaussianTridiag);
    cfg.k = 3;
    cfg.kl_samples = 2000;
    let cell = Cell {
        dim: 4,
        estimator: EstimatorKind::Local,
        budget: 4000,
        seed: 43,
    };
    let fit = run_fit(&cfg, cell)?;
    let model = &fit.model;
    let report = model.compression.as_ref().expect("compressed");
    println!("forward KL {:.4} ± {:.4}", fit.row.kl, fit.row.kl_stderr);
    for (cut, bond) in report.bonds.iter().enumerate() {
        println!("cut {}: bond {bond} (dense bound {})", cut + 1, dense_bond_bound(cfg.k, cell.dim, cut + 1));
    }
    println!("relative reconstruction error {:.2e}", report.relative_error());

    let x = [0.2, -0.1, 0.4, 0.0];
    println!("q(x) = {:.6e}", model.eval(&x)?);
    println!("q(x0 = 0.2) = {:.6}", model.marginal_density(&[0], &[0.2])?);
    let full = model.box_probability(&[0, 1, 2, 3], &[(f64::NEG_INFINITY, f64::INFINITY); 4])?;
    let orthant = model.box_probability(&[0, 1], &[(0.0, f64::INFINITY); 2])?;
    println!("P(all of R^4) = {:.10}, P(x0 > 0, x1 > 0) = {:.4}", full.value, orthant.value);
    println!("score at x: {:?}", model.score(&x)?.score);
    Ok(())
}
