//! Embeds boolean formulas into densities whose mass on a box reveals
//! satisfiability, then verifies the gap by stratified sampling.

use mpobm::hardness::{model_count, parse_formula, verify_gap, BumpKind, HardDensity};

fn main() -> mpobm::Result<()> {
    let formulas = [
        "(x1 & x2) | !x3",
        "x1 & !x1",
        "(x1 | x2) & (!x1 | x3) & (!x2 | !x3)",
        "p cnf 3 4\n1 2 0\n-1 2 0\n1 -2 0\n-1 -2 0\n",
    ];
    for text in formulas {
        let f = parse_formula(text)?;
        let hd = HardDensity::new(f.clone(), BumpKind::Smooth);
        let r = verify_gap(&hd, 40_000, 43)?;
        println!(
            "{:<45} MC={} P(A)={:.5} ± {:.1e} (predicted {:.5}) -> {}",
            f.to_string(),
            model_count(&f)?,
            r.estimate,
            r.stderr,
            r.predicted,
            if r.decided_sat { "SAT" } else { "UNSAT" }
        );
    }
    Ok(())
}
