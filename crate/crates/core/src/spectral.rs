//! Ground space of an estimated Hamiltonian and its low-energy spectrum.
//!
//! Dense Hamiltonians use a full symmetric eigendecomposition. Local sums are
//! handled matrix-free by a Lanczos solver with full reorthogonalization that
//! finds one eigenpair at a time and locks it, so degenerate ground spaces are
//! recovered with their full multiplicity.

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianRep;
use crate::linalg::sorted_eigen;
use crate::rng::{self, Tag};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Regularizer in the relative gap (λ_{i+1} − λ_i) / (|λ_i| + GAP_EPS).
pub const GAP_EPS: f64 = 1e-12;

pub const DEFAULT_REPORT_EIGS: usize = 100;

/// Largest local-sum dimension that `Auto` assembles and diagonalizes densely.
pub const AUTO_DENSE_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Dense for dense Hamiltonians and small local sums, Lanczos otherwise.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Seed for the Lanczos start vectors.
    pub seed: u64,
    /// Residual tolerance relative to the spectral-norm estimate.
    pub tol: f64,
    pub max_krylov: usize,
    pub max_restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Auto,
            seed: 0,
            tol: 1e-11,
            max_krylov: 300,
            max_restarts: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundSpace {
    /// K^D × r, orthonormal columns, ordered by eigenvalue.
    pub u: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub r: usize,
    pub method: SolverMethod,
    /// ‖H u_i − λ_i u_i‖ per column.
    pub residuals: Vec<f64>,
}

impl GroundSpace {
    pub fn from_columns(u: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        let r = u.ncols();
        if r == 0 || eigenvalues.len() != r {
            return Err(Error::Contract(format!("ground space with {r} columns and {} eigenvalues", eigenvalues.len())));
        }
        let gram = u.transpose() * &u;
        let dev = (gram - DMatrix::identity(r, r)).amax();
        if dev > 1e-8 {
            return Err(Error::Contract(format!("ground-space columns are not orthonormal (|UᵀU − I| = {dev:.2e})")));
        }
        Ok(Self {
            u,
            eigenvalues,
            r,
            method: SolverMethod::Dense,
            residuals: vec![0.0; r],
        })
    }

    pub fn size(&self) -> usize {
        self.u.nrows()
    }
}

pub fn ground_space(h: &HamiltonianRep, r: usize) -> Result<GroundSpace> {
    ground_space_with(h, r, &SolverOptions::default())
}

pub fn ground_space_with(h: &HamiltonianRep, r: usize, opts: &SolverOptions) -> Result<GroundSpace> {
    let n = h.size();
    if r == 0 || r > n {
        return Err(Error::Config(format!("rank r = {r} must lie in 1..={n}")));
    }
    let method = match (opts.method, h) {
        (SolverMethod::Auto, HamiltonianRep::Dense(_)) => SolverMethod::Dense,
        (SolverMethod::Auto, HamiltonianRep::Local(_)) if n <= AUTO_DENSE_LIMIT => SolverMethod::Dense,
        (SolverMethod::Auto, HamiltonianRep::Local(_)) => SolverMethod::Lanczos,
        (m, _) => m,
    };
    match method {
        SolverMethod::Dense => {
            let m = h.to_dense()?;
            dense_ground_space(&m, r)
        }
        _ => lanczos_ground_space(|v| h.apply(v), n, r, opts),
    }
}

pub fn dense_ground_space(h: &DMatrix<f64>, r: usize) -> Result<GroundSpace> {
    let n = h.nrows();
    if r == 0 || r > n {
        return Err(Error::Config(format!("rank r = {r} must lie in 1..={n}")));
    }
    let (vals, vecs) = sorted_eigen(h);
    let u = vecs.columns(0, r).into_owned();
    let eigenvalues: Vec<f64> = vals[..r].to_vec();
    let residuals = residual_norms(h, &u, &eigenvalues);
    Ok(GroundSpace {
        u,
        eigenvalues,
        r,
        method: SolverMethod::Dense,
        residuals,
    })
}

fn residual_norms(h: &DMatrix<f64>, u: &DMatrix<f64>, vals: &[f64]) -> Vec<f64> {
    let hu = h * u;
    (0..u.ncols()).map(|c| (hu.column(c) - vals[c] * u.column(c)).norm()).collect()
}

fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(w);
            w.axpy(-c, q, 1.0);
        }
    }
}

/// Checkpoints at which the tridiagonal Ritz problem is solved.
fn should_check(j: usize) -> bool {
    j < 8 || j % (j / 8).max(1) == 0
}

/// Lowest eigenpair of H restricted to the orthogonal complement of `locked`.
fn lowest_deflated<F>(apply: &F, n: usize, locked: &[DVector<f64>], cycle: usize, opts: &SolverOptions) -> Result<(f64, DVector<f64>, usize)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let free = n - locked.len();
    let cap = opts.max_krylov.min(free).max(1);
    let mut stream = rng::stream(opts.seed, Tag::LanczosStart, cycle as u64);
    let mut v = DVector::from_fn(n, |_, _| stream.sample::<f64, _>(StandardNormal));
    orthogonalize(&mut v, locked);
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::Numerical("Lanczos start vector vanished after deflation".into()));
    }
    v /= norm;

    let mut hnorm = 0.0f64;
    let mut last_residual = f64::INFINITY;
    let mut iterations = 0;
    for _restart in 0..opts.max_restarts {
        let mut q: Vec<DVector<f64>> = vec![v.clone()];
        let mut alpha: Vec<f64> = Vec::with_capacity(cap);
        let mut beta: Vec<f64> = Vec::with_capacity(cap);
        for j in 0..cap {
            iterations += 1;
            let hq = apply(q[j].as_slice())?;
            let mut w = DVector::from_vec(hq);
            let a = q[j].dot(&w);
            alpha.push(a);
            w.axpy(-a, &q[j], 1.0);
            if j > 0 {
                w.axpy(-beta[j - 1], &q[j - 1], 1.0);
            }
            orthogonalize(&mut w, locked);
            orthogonalize(&mut w, &q);
            let b = w.norm();
            let m = j + 1;
            let exhausted = m == cap;
            let invariant = b <= 1e-14 * hnorm.max(a.abs()).max(f64::MIN_POSITIVE);
            if should_check(j) || exhausted || invariant {
                let t = DMatrix::from_fn(m, m, |r, c| {
                    if r == c {
                        alpha[r]
                    } else if r + 1 == c {
                        beta[r]
                    } else if c + 1 == r {
                        beta[c]
                    } else {
                        0.0
                    }
                });
                let (theta, y) = sorted_eigen(&t);
                hnorm = hnorm.max(theta[0].abs()).max(theta[m - 1].abs());
                last_residual = b * y[(m - 1, 0)].abs();
                let converged = last_residual <= opts.tol * hnorm.max(f64::MIN_POSITIVE) || invariant;
                if converged || exhausted {
                    let mut ritz = DVector::zeros(n);
                    for (i, qi) in q.iter().enumerate() {
                        ritz.axpy(y[(i, 0)], qi, 1.0);
                    }
                    orthogonalize(&mut ritz, locked);
                    ritz /= ritz.norm();
                    if converged || (exhausted && cap == free) {
                        return Ok((theta[0], ritz, iterations));
                    }
                    v = ritz;
                    break;
                }
            }
            q.push(w / b);
            beta.push(b);
        }
    }
    Err(Error::NotConverged {
        iterations,
        residuals: vec![last_residual],
    })
}

/// Matrix-free ground space by Lanczos with locking.
pub fn lanczos_ground_space<F>(apply: F, n: usize, r: usize, opts: &SolverOptions) -> Result<GroundSpace>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if r == 0 || r > n {
        return Err(Error::Config(format!("rank r = {r} must lie in 1..={n}")));
    }
    let mut locked: Vec<DVector<f64>> = Vec::with_capacity(r);
    for cycle in 0..r {
        let (_, vec, _) = lowest_deflated(&apply, n, &locked, cycle, opts).map_err(|e| e.context(format!("Lanczos eigenpair {}", cycle + 1)))?;
        locked.push(vec);
    }

    // Rayleigh–Ritz on the locked span fixes the final ordering.
    let u0 = DMatrix::from_columns(&locked);
    let mut hu0 = DMatrix::zeros(n, r);
    for c in 0..r {
        let col = apply(u0.column(c).as_slice())?;
        hu0.set_column(c, &DVector::from_vec(col));
    }
    let mut small = u0.transpose() * &hu0;
    crate::linalg::symmetrize(&mut small);
    let (vals, y) = sorted_eigen(&small);
    let u = &u0 * &y;
    let hu = &hu0 * &y;
    let residuals: Vec<f64> = (0..r).map(|c| (hu.column(c) - vals[c] * u.column(c)).norm()).collect();
    Ok(GroundSpace {
        u,
        eigenvalues: vals,
        r,
        method: SolverMethod::Lanczos,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// The lowest `n_eigs` eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// (λ_{i+1} − λ_i)/(|λ_i| + 1e-12), length n_eigs − 1.
    pub rel_gaps: Vec<f64>,
    /// Index into `rel_gaps` of the gap above the rank-r ground space.
    pub ground_gap_index: Option<usize>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub notice: Option<String>,
}

impl SpectralReport {
    pub fn ground_gap(&self) -> Option<f64> {
        self.ground_gap_index.and_then(|i| self.rel_gaps.get(i).copied())
    }

    pub fn rows(&self) -> Vec<GapRow> {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &lambda)| GapRow {
                eig_index: i,
                lambda,
                rel_gap: self.rel_gaps.get(i).copied(),
                ground_gap: self.ground_gap_index == Some(i),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub eig_index: usize,
    pub lambda: f64,
    pub rel_gap: Option<f64>,
    pub ground_gap: bool,
}

pub fn relative_gaps(eigenvalues: &[f64]) -> Vec<f64> {
    eigenvalues.windows(2).map(|w| (w[1] - w[0]) / (w[0].abs() + GAP_EPS)).collect()
}

/// Eigenvalue ladder of a dense Hamiltonian. `n_eigs` above the matrix size
/// is clipped with a notice; `r` marks which gap sits above the ground space.
pub fn spectral_report(h: &DMatrix<f64>, n_eigs: usize, r: usize) -> SpectralReport {
    let n = h.nrows();
    let (vals, _) = sorted_eigen(h);
    let mut notice = None;
    let take = if n_eigs > n {
        notice = Some(format!("requested {n_eigs} eigenvalues but K^D = {n}; reporting all {n}"));
        n
    } else {
        n_eigs
    };
    let eigenvalues: Vec<f64> = vals[..take].to_vec();
    let rel_gaps = relative_gaps(&eigenvalues);
    let ground_gap_index = (r >= 1 && r <= rel_gaps.len()).then(|| r - 1);
    SpectralReport {
        eigenvalues,
        rel_gaps,
        ground_gap_index,
        lambda_min: vals.first().copied().unwrap_or(0.0),
        lambda_max: vals.last().copied().unwrap_or(0.0),
        notice,
    }
}
