//! Evaluates the 1-D feature maps and checks their orthonormality.
//!
//! Run with `cargo run --example basis_features`.

use mpobm::basis::DEFAULT_HERMITE_SCALE;
use mpobm::Basis;

fn main() -> mpobm::Result<()> {
    let hermite = Basis::hermite_scaled(4, DEFAULT_HERMITE_SCALE)?;
    let fourier = Basis::fourier(5, 10.0)?;

    for (name, basis) in [("hermite", &hermite), ("fourier", &fourier)] {
        let ov = basis.overlap_matrices()?;
        let k = basis.k();
        let gram_err = (&ov.gram - nalgebra::DMatrix::<f64>::identity(k, k)).amax();
        println!("{name}: K={k}, support {:?}, max |gram - I| = {gram_err:.2e}", basis.support());
        println!("  phi(0.5)  = {:?}", basis.eval_phi(0.5)?);
        println!("  phi'(0.5) = {:?}", basis.eval_phi_dot(0.5)?);
    }

    // Interval matrices feed box probabilities; they add up over adjacent intervals.
    let left = hermite.interval(f64::NEG_INFINITY, 0.0)?;
    let right = hermite.interval(0.0, f64::INFINITY)?;
    println!("half-line split, max |I(-inf,0) + I(0,inf) - I| = {:.2e}", (left + right - nalgebra::DMatrix::<f64>::identity(4, 4)).amax());
    Ok(())
}
