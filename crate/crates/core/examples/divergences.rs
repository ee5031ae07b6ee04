//! Forward KL, reverse KL, Fisher divergence and the log-Sobolev check for a
//! fitted model on a 2-D Gaussian.

use mpobm::divergence::{fisher_divergence, forward_kl, lsi_check, reverse_kl};
use mpobm::harness::{run_fit, Cell, ExperimentConfig};
use mpobm::hamiltonian::EstimatorKind;
use mpobm::{make_target, TargetKind};

fn main() -> mpobm::Result<()> {
    let mut cfg = ExperimentConfig::new(TargetKind::GaussianTridiag);
    cfg.k = 3;
    cfg.r = 1;
    let cell = Cell {
        dim: 2,
        estimator: EstimatorKind::Global,
        budget: 300,
        seed: 43,
    };
    let fit = run_fit(&cfg, cell)?;
    let target = make_target(&cfg.target, 2)?;
    let n = 10_000;
    let fkl = forward_kl(&target, &fit.model, n, 7)?;
    let rkl = reverse_kl(&target, &fit.model, n, 7)?;
    let fisher = fisher_divergence(&target, &fit.model, n, 7)?;
    println!("KL(p||q) = {:.4e} ± {:.1e}", fkl.value, fkl.stderr);
    println!("KL(q||p) = {:.4e} ± {:.1e}", rkl.value, rkl.stderr);
    println!("F(q||p)  = {:.4e} ± {:.1e}", fisher.value, fisher.stderr);

    let lsi = lsi_check(&target, &fit.model, n, 7)?;
    println!(
        "LSI: KL(q||p) {:.4e} <= F/(2c) {:.4e} with c = {:.3}: {}",
        lsi.kl.value, lsi.bound, lsi.c, lsi.satisfied
    );
    Ok(())
}
