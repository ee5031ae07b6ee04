//! Library results against independently written reference computations.

use mpobm::divergence::{forward_kl, DensityModel};
use mpobm::hamiltonian::exact_h_quadrature;
use mpobm::hardness::{model_count, random_formula, Expr, Formula};
use mpobm::mpo::{BornScore, LogDensity};
use mpobm::{make_target, Basis, BornModel, TargetKind, TargetParams};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Physicists' Hermite polynomial from the explicit sum.
fn hermite_poly(n: usize, x: f64) -> f64 {
    let fact = |m: usize| (1..=m).map(|v| v as f64).product::<f64>();
    (0..=n / 2)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * fact(n) / (fact(m) * fact(n - 2 * m)) * (2.0 * x).powi((n - 2 * m) as i32)
        })
        .sum()
}

fn hermite_function(n: usize, x: f64) -> f64 {
    let fact: f64 = (1..=n).map(|v| v as f64).product();
    let norm = (2f64.powi(n as i32) * fact * PI.sqrt()).sqrt().recip();
    norm * hermite_poly(n, x) * (-0.5 * x * x).exp()
}

#[test]
fn hermite_features_match_the_explicit_formula() {
    let plain = Basis::hermite(6).unwrap();
    let wide = Basis::hermite_scaled(6, std::f64::consts::SQRT_2).unwrap();
    for i in 0..41 {
        let x = -4.0 + 0.2 * i as f64;
        let a = plain.eval_phi(x).unwrap();
        let b = wide.eval_phi(x).unwrap();
        for n in 0..6 {
            assert!((a[n] - hermite_function(n, x)).abs() < 1e-12, "n={n} x={x}");
            let stretched = hermite_function(n, x / std::f64::consts::SQRT_2) / 2f64.powf(0.25);
            assert!((b[n] - stretched).abs() < 1e-12, "n={n} x={x}");
        }
    }
}

#[test]
fn scaled_ground_feature_squares_to_the_standard_normal() {
    let b = Basis::hermite_scaled(1, std::f64::consts::SQRT_2).unwrap();
    for x in [-2.0, -0.3, 0.0, 1.7] {
        let phi0 = b.eval_phi(x).unwrap()[0];
        let normal = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        assert!((phi0 * phi0 - normal).abs() < 1e-14);
    }
}

/// Composite Simpson rule on [a, b] with `n` (even) panels.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn one_dimensional_hamiltonian_matches_simpson() {
    // p = N(0, 1/λ): score −λx. H = ∫ (2φ̇ + λxφ)(2φ̇ + λxφ)ᵀ dx.
    let lambda = 1.7;
    let params = TargetParams {
        diag: lambda,
        offdiag: 0.0,
        ..TargetParams::new(TargetKind::GaussianTridiag)
    };
    let target = make_target(&params, 1).unwrap();
    let basis = Basis::hermite(3).unwrap();
    let h = exact_h_quadrature(&basis, &target, 24.0, 96).unwrap().matrix;
    for i in 0..3 {
        for j in 0..3 {
            let f = |x: f64| {
                let phi = basis.eval_phi(x).unwrap();
                let dphi = basis.eval_phi_dot(x).unwrap();
                (2.0 * dphi[i] + lambda * x * phi[i]) * (2.0 * dphi[j] + lambda * x * phi[j])
            };
            let reference = simpson(-12.0, 12.0, 4000, f);
            assert!((h[(i, j)] - reference).abs() < 1e-8, "({i},{j}) {} vs {reference}", h[(i, j)]);
        }
    }
}

#[test]
fn two_dimensional_hamiltonian_matches_a_tensor_grid() {
    let target = make_target(&TargetParams::new(TargetKind::GaussianTridiag), 2).unwrap();
    let basis = Basis::hermite(2).unwrap();
    let h = exact_h_quadrature(&basis, &target, 20.0, 80).unwrap().matrix;
    let prec = target.precision().unwrap();
    let n = 400;
    let (a, b) = (-10.0, 10.0);
    let step = (b - a) / n as f64;
    let w = |i: usize| {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    } * step
        / 3.0;
    let mut reference = DMatrix::zeros(4, 4);
    for i in 0..=n {
        for j in 0..=n {
            let x = [a + i as f64 * step, a + j as f64 * step];
            let s = -(&prec * DVector::from_column_slice(&x));
            let p0 = basis.eval_phi(x[0]).unwrap();
            let p1 = basis.eval_phi(x[1]).unwrap();
            let d0 = basis.eval_phi_dot(x[0]).unwrap();
            let d1 = basis.eval_phi_dot(x[1]).unwrap();
            for comp in 0..2 {
                let mut v = DVector::zeros(4);
                for u in 0..2 {
                    for t in 0..2 {
                        let grad = if comp == 0 { d0[u] * p1[t] } else { p0[u] * d1[t] };
                        v[u * 2 + t] = 2.0 * grad - s[comp] * p0[u] * p1[t];
                    }
                }
                reference += &v * v.transpose() * (w(i) * w(j));
            }
        }
    }
    let err = (&h - &reference).amax() / reference.amax();
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn gaussian_log_density_matches_the_closed_form() {
    let target = make_target(&TargetParams::new(TargetKind::GaussianTridiag), 4).unwrap();
    let prec = target.precision().unwrap();
    let logdet = prec.clone().cholesky().unwrap().l().diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>();
    let x = [0.3, -1.1, 0.7, 2.0];
    let v = DVector::from_column_slice(&x);
    let quad = (v.transpose() * &prec * &v)[(0, 0)];
    let expected = -0.5 * quad + 0.5 * logdet - 2.0 * (2.0 * PI).ln();
    assert!((target.log_density(&x).unwrap() - expected).abs() < 1e-12);
}

struct IsoGaussian {
    mean: Vec<f64>,
    var: f64,
}

impl DensityModel for IsoGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn log_density(&self, x: &[f64]) -> mpobm::Result<LogDensity> {
        let d = self.mean.len() as f64;
        let q: f64 = x.iter().zip(&self.mean).map(|(a, m)| (a - m).powi(2)).sum();
        Ok(LogDensity {
            value: -0.5 * d * (2.0 * PI * self.var).ln() - 0.5 * q / self.var,
            clamped: false,
        })
    }
    fn score(&self, x: &[f64]) -> mpobm::Result<BornScore> {
        Ok(BornScore {
            score: x.iter().zip(&self.mean).map(|(a, m)| -(a - m) / self.var).collect(),
            unreliable: false,
        })
    }
}

#[test]
fn forward_kl_matches_the_gaussian_closed_form() {
    // KL(N(0, I) ‖ N(μ, vI)) = ½[D/v + |μ|²/v − D + D ln v].
    let target = make_target(&TargetParams::isotropic_gaussian(1.0), 3).unwrap();
    let model = IsoGaussian {
        mean: vec![0.5, -0.2, 0.1],
        var: 1.5,
    };
    let d = 3.0;
    let mu2: f64 = model.mean.iter().map(|m| m * m).sum();
    let exact = 0.5 * (d / model.var + mu2 / model.var - d + d * model.var.ln());
    let est = forward_kl(&target, &model, 40_000, 11).unwrap();
    assert!((est.value - exact).abs() < 4.0 * est.stderr, "{} vs {exact} ± {}", est.value, est.stderr);
}

#[test]
fn product_born_model_box_probability_matches_erf() {
    // ρ = (e₀e₀ᵀ)^{⊗2} with the √2-scaled basis is the standard normal.
    let basis = Basis::hermite_scaled(3, std::f64::consts::SQRT_2).unwrap();
    let mut rho = DMatrix::zeros(9, 9);
    rho[(0, 0)] = 1.0;
    let model = BornModel::from_dense(rho, &basis, 2).unwrap().to_mpo(1e-12, 16).unwrap();
    let cdf = |x: f64| 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let (a0, b0, a1, b1) = (-0.4, 1.3, 0.2, 2.5);
    let p = model.box_probability(&[0, 1], &[(a0, b0), (a1, b1)]).unwrap();
    let expected = (cdf(b0) - cdf(a0)) * (cdf(b1) - cdf(a1));
    assert!((p.value - expected).abs() < 1e-10, "{} vs {expected}", p.value);
}

fn dpll_count(clauses: &[Vec<i64>], n: usize, assigned: &mut Vec<Option<bool>>) -> u64 {
    let mut unassigned = 0;
    for c in clauses {
        let mut satisfied = false;
        let mut open = false;
        for &l in c {
            match assigned[l.unsigned_abs() as usize - 1] {
                Some(v) if v == (l > 0) => satisfied = true,
                None => open = true,
                _ => {}
            }
        }
        if !satisfied && !open {
            return 0;
        }
    }
    let next = assigned.iter().position(|a| a.is_none());
    let Some(v) = next else { return 1 };
    for a in assigned.iter() {
        if a.is_none() {
            unassigned += 1;
        }
    }
    let all_satisfied = clauses.iter().all(|c| {
        c.iter()
            .any(|&l| assigned[l.unsigned_abs() as usize - 1] == Some(l > 0))
    });
    if all_satisfied {
        return 1u64 << unassigned;
    }
    let mut total = 0;
    for val in [false, true] {
        assigned[v] = Some(val);
        total += dpll_count(clauses, n, assigned);
    }
    assigned[v] = None;
    total
}

/// Tseitin-free CNF conversion by distribution; fine for the small random trees used here.
fn to_cnf(e: &Expr) -> Vec<Vec<i64>> {
    fn nnf(e: &Expr, negate: bool) -> Expr {
        match (e, negate) {
            (Expr::Var(_), false) => e.clone(),
            (Expr::Var(_), true) => Expr::not(e.clone()),
            (Expr::Not(a), n) => nnf(a, !n),
            (Expr::And(a, b), false) => Expr::and(nnf(a, false), nnf(b, false)),
            (Expr::And(a, b), true) => Expr::or(nnf(a, true), nnf(b, true)),
            (Expr::Or(a, b), false) => Expr::or(nnf(a, false), nnf(b, false)),
            (Expr::Or(a, b), true) => Expr::and(nnf(a, true), nnf(b, true)),
        }
    }
    fn cnf(e: &Expr) -> Vec<Vec<i64>> {
        match e {
            Expr::Var(i) => vec![vec![*i as i64]],
            Expr::Not(a) => match a.as_ref() {
                Expr::Var(i) => vec![vec![-(*i as i64)]],
                _ => unreachable!("input is in negation normal form"),
            },
            Expr::And(a, b) => {
                let mut c = cnf(a);
                c.extend(cnf(b));
                c
            }
            Expr::Or(a, b) => {
                let (ca, cb) = (cnf(a), cnf(b));
                let mut out = Vec::new();
                for x in &ca {
                    for y in &cb {
                        let mut c = x.clone();
                        c.extend(y);
                        out.push(c);
                    }
                }
                out
            }
        }
    }
    cnf(&nnf(e, false))
}

#[test]
fn enumeration_agrees_with_dpll() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let n = 2 + (rand::Rng::random_range(&mut rng, 0..7usize));
        let f: Formula = random_formula(n, &mut rng);
        let clauses = to_cnf(&f.expr);
        let mut assigned = vec![None; n];
        assert_eq!(model_count(&f).unwrap(), dpll_count(&clauses, n, &mut assigned), "{f}");
    }
}
