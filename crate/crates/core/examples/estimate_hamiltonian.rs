//! Compares the global and local Hamiltonian estimators with the quadrature
//! oracle on a small Gaussian, for a few budgets.

use mpobm::basis::DEFAULT_HERMITE_SCALE;
use mpobm::hamiltonian::{assemble_dense, estimate_h_global, estimate_h_local, exact_h_quadrature, SamplingPlan};
use mpobm::linalg::spectral_norm;
use mpobm::{make_target, Basis, TargetKind, TargetParams};

fn main() -> mpobm::Result<()> {
    let basis = Basis::hermite_scaled(2, DEFAULT_HERMITE_SCALE)?;
    let target = make_target(&TargetParams::new(TargetKind::GaussianTridiag), 3)?;
    let exact = exact_h_quadrature(&basis, &target, 10.0, 48)?;
    let norm = spectral_norm(&exact.matrix);
    println!("exact H: {}x{}, spectral norm {norm:.4}", exact.matrix.nrows(), exact.matrix.ncols());

    println!("{:>8} {:>12} {:>12}", "B", "global err", "local err");
    for budget in [1_000u64, 10_000, 100_000] {
        let plan = SamplingPlan::new(budget, 43);
        let global = estimate_h_global(&basis, &target, &plan)?;
        let local = assemble_dense(&estimate_h_local(&basis, &target, &plan)?)?;
        let g = spectral_norm(&(&global.matrix - &exact.matrix)) / norm;
        let l = spectral_norm(&(&local - &exact.matrix)) / norm;
        println!("{budget:>8} {g:>12.4} {l:>12.4}");
    }
    Ok(())
}
