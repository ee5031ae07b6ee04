//! Ground space and relative eigengaps of an estimated Hamiltonian.

use mpobm::hamiltonian::{estimate_h_global, SamplingPlan};
use mpobm::spectral::{ground_space, spectral_report};
use mpobm::{make_target, Basis, HamiltonianRep, TargetKind, TargetParams};

fn main() -> mpobm::Result<()> {
    let basis = Basis::hermite_scaled(3, std::f64::consts::SQRT_2)?;
    let target = make_target(&TargetParams::new(TargetKind::Ring), 3)?;
    let h = estimate_h_global(&basis, &target, &SamplingPlan::new(5000, 43))?;
    let report = spectral_report(&h.matrix, 10, 2);
    for row in report.rows() {
        let gap = row.rel_gap.map_or(String::from("-"), |g| format!("{g:.4e}"));
        println!("{:>3} {:>12.6} {:>12}{}", row.eig_index, row.lambda, gap, if row.ground_gap { "  <- ground gap" } else { "" });
    }

    let gs = ground_space(&HamiltonianRep::Dense(h), 2)?;
    println!("rank-2 ground space, eigenvalues {:?}", gs.eigenvalues);
    Ok(())
}
