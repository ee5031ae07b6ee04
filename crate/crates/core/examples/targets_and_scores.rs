//! Samples each synthetic target, checks its score against finite
//! differences of the log-density and shows the query counter.

use mpobm::{make_target, ScoreOracle, TargetKind, TargetParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mpobm::Result<()> {
    let dim = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for kind in TargetKind::ALL {
        let t = make_target(&TargetParams::new(kind), dim)?;
        let x = t.sample_one(&mut rng);
        let s = t.score(&x)?;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for j in 0..dim {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (t.log_density(&up)? - t.log_density(&dn)?) / (2.0 * h);
            worst = worst.max((fd - s[j]).abs() / s[j].abs().max(1.0));
        }
        let local = t.local_score(2, &x[t.clique(2)])?;
        println!(
            "{:<17} log p = {:>8.3}  score[2] = {:>8.4} (local {:>8.4})  fd err {:.1e}  queries {}",
            kind.name(),
            t.log_density(&x)?,
            s[2],
            local,
            worst,
            t.query_count()
        );
    }
    Ok(())
}
