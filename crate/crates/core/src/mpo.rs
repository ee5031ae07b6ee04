//! Matrix-product-operator compression and Born-model evaluation.
//!
//! A density operator ρ on (ℝ^K)^{⊗D} is stored either densely, as a rank
//! factor ρ = W Wᵀ, or as an MPO whose core d has shape R_{d−1} × K × K × R_d.
//! Every evaluation reduces to contracting one K × K matrix per site against
//! ρ: φφᵀ for a point, the identity for a marginalized coordinate, and the
//! interval overlap ∫ₐᵇ φφᵀ for a box. On an MPO that costs O(D K² R²).

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::hamiltonian::DENSE_LIMIT;
use crate::linalg::{kron_into, pow_usize};
use crate::spectral::GroundSpace;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_ERR: f64 = 1e-6;
pub const DEFAULT_MAX_BOND: usize = 256;
pub const DEFAULT_LOG_FLOOR: f64 = 1e-300;

/// Largest K^D compressed from the dense matrix; above this the rank factor is used.
pub const DENSE_SWEEP_LIMIT: usize = 1024;

/// Tolerated excursion of a box probability outside [0, 1] before it is flagged.
const PROBABILITY_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub left: usize,
    pub k: usize,
    pub right: usize,
    /// Row-major over (a, i, j, b).
    pub data: Vec<f64>,
}

impl Core {
    pub fn zeros(left: usize, k: usize, right: usize) -> Self {
        Self {
            left,
            k,
            right,
            data: vec![0.0; left * k * k * right],
        }
    }

    #[inline]
    pub fn index(&self, a: usize, i: usize, j: usize, b: usize) -> usize {
        ((a * self.k + i) * self.k + j) * self.right + b
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, j: usize, b: usize) -> f64 {
        self.data[self.index(a, i, j, b)]
    }

    /// Σ_ij G[a, i, j, b] M[i, j] as a left × right matrix.
    pub fn reduce(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let k2 = self.k * self.k;
        let mut out = DMatrix::zeros(self.left, self.right);
        for a in 0..self.left {
            for p in 0..k2 {
                let w = m[(p / self.k, p % self.k)];
                if w == 0.0 {
                    continue;
                }
                let base = (a * k2 + p) * self.right;
                for b in 0..self.right {
                    out[(a, b)] += w * self.data[base + b];
                }
            }
        }
        out
    }

    /// env ↦ Σ_{a,i,j} env[a] · w[i·K + j] · G[a, i, j, ·], with w the flattened site matrix.
    pub fn absorb(&self, env: &[f64], w: &[f64]) -> Vec<f64> {
        let k2 = self.k * self.k;
        let mut out = vec![0.0; self.right];
        for (a, &e) in env.iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            for (p, &wp) in w.iter().enumerate() {
                let c = e * wp;
                if c == 0.0 {
                    continue;
                }
                let base = (a * k2 + p) * self.right;
                for (o, g) in out.iter_mut().zip(&self.data[base..base + self.right]) {
                    *o += c * g;
                }
            }
        }
        out
    }

    /// The core as a (left·K²) × right matrix.
    fn as_left_matrix(&self) -> DMatrix<f64> {
        let rows = self.left * self.k * self.k;
        DMatrix::from_fn(rows, self.right, |r, b| self.data[r * self.right + b])
    }

    fn from_left_matrix(m: &DMatrix<f64>, left: usize, k: usize) -> Self {
        let right = m.ncols();
        let mut c = Core::zeros(left, k, right);
        for r in 0..m.nrows() {
            for b in 0..right {
                c.data[r * right + b] = m[(r, b)];
            }
        }
        c
    }

    /// The core as a left × (K²·right) matrix.
    fn as_right_matrix(&self) -> DMatrix<f64> {
        let cols = self.k * self.k * self.right;
        DMatrix::from_fn(self.left, cols, |a, c| self.data[a * cols + c])
    }

    fn from_right_matrix(m: &DMatrix<f64>, k: usize, right: usize) -> Self {
        let left = m.nrows();
        let mut c = Core::zeros(left, k, right);
        let cols = m.ncols();
        for a in 0..left {
            for col in 0..cols {
                c.data[a * cols + col] = m[(a, col)];
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub err: f64,
    pub max_bond: usize,
    /// Internal bond dimensions R_1..R_{D−1}.
    pub bonds: Vec<usize>,
    /// Some cut wanted more than `max_bond` singular values above the threshold.
    pub cap_hit: bool,
    /// ‖ρ − ρ_mpo‖_F of the emitted (trace-normalized) MPO.
    pub reconstruction_error: f64,
    pub rho_norm: f64,
    /// tr(ρ_mpo) before normalization.
    pub raw_trace: f64,
    pub factored: bool,
}

impl CompressionReport {
    pub fn achieved_max_bond(&self) -> usize {
        self.bonds.iter().copied().max().unwrap_or(1)
    }

    pub fn relative_error(&self) -> f64 {
        if self.rho_norm > 0.0 {
            self.reconstruction_error / self.rho_norm
        } else {
            self.reconstruction_error
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mpo {
    pub cores: Vec<Core>,
    pub k: usize,
}

/// min(K^{2d}, K^{2(D−d)}): the bond dimension a generic operator needs at cut d.
pub fn dense_bond_bound(k: usize, dim: usize, cut: usize) -> usize {
    let side = cut.min(dim - cut);
    pow_usize(k * k, side).unwrap_or(usize::MAX)
}

impl Mpo {
    pub fn new(cores: Vec<Core>, k: usize) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::Contract("an MPO needs at least one core".into()));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(Error::Contract("boundary bond dimensions must be 1".into()));
        }
        for (d, c) in cores.iter().enumerate() {
            if c.k != k || c.data.len() != c.left * k * k * c.right {
                return Err(Error::Contract(format!("core {d} has inconsistent shape")));
            }
            if d + 1 < cores.len() && c.right != cores[d + 1].left {
                return Err(Error::Contract(format!(
                    "bond {} mismatch: core {d} has right dimension {} but core {} has left dimension {}",
                    d + 1,
                    c.right,
                    d + 1,
                    cores[d + 1].left
                )));
            }
        }
        Ok(Self { cores, k })
    }

    pub fn dim(&self) -> usize {
        self.cores.len()
    }

    pub fn bonds(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1].iter().map(|c| c.right).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bonds().into_iter().max().unwrap_or(1)
    }

    /// Σ over all indices of Π_d G_d[i_d, j_d] M_d[i_d, j_d].
    pub fn contract(&self, mats: &[DMatrix<f64>]) -> f64 {
        let k = self.k;
        let mut env = vec![1.0];
        for (core, m) in self.cores.iter().zip(mats) {
            let w: Vec<f64> = (0..k * k).map(|p| m[(p / k, p % k)]).collect();
            env = core.absorb(&env, &w);
        }
        env[0]
    }

    pub fn trace(&self) -> f64 {
        let id = DMatrix::identity(self.k, self.k);
        self.contract(&vec![id; self.dim()])
    }

    pub fn scale(&mut self, c: f64) {
        self.cores[0].data.iter_mut().for_each(|v| *v *= c);
    }

    /// The full K^D × K^D matrix.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = pow_usize(self.k, self.dim()).filter(|&n| n <= DENSE_LIMIT).ok_or(Error::Size {
            what: "dense MPO contraction K^D",
            needed: pow_usize(self.k, self.dim()).unwrap_or(usize::MAX),
            limit: DENSE_LIMIT,
        })?;
        let k = self.k;
        // partial[(I, J), b] over the sites processed so far
        let mut rows = 1usize;
        let mut partial = DMatrix::from_element(1, 1, 1.0);
        for core in &self.cores {
            let new_rows = rows * k;
            let mut next = DMatrix::zeros(new_rows * new_rows, core.right);
            for ib in 0..rows {
                for jb in 0..rows {
                    let src = ib * rows + jb;
                    for a in 0..core.left {
                        let w = partial[(src, a)];
                        if w == 0.0 {
                            continue;
                        }
                        for i in 0..k {
                            for j in 0..k {
                                let dst = (ib * k + i) * new_rows + (jb * k + j);
                                for b in 0..core.right {
                                    next[(dst, b)] += w * core.get(a, i, j, b);
                                }
                            }
                        }
                    }
                }
            }
            partial = next;
            rows = new_rows;
        }
        debug_assert_eq!(rows, n);
        Ok(DMatrix::from_fn(n, n, |i, j| partial[(i * n + j, 0)]))
    }

    /// ρ_mpo · v for a vector of length K^D.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let k = self.k;
        let dim = self.dim();
        let n = pow_usize(k, dim).ok_or(Error::Size {
            what: "state vector K^D",
            needed: usize::MAX,
            limit: usize::MAX,
        })?;
        if v.len() != n {
            return Err(Error::Contract(format!("vector of length {} for an MPO on K^D = {n}", v.len())));
        }
        // x[(out, a, rest)]: `out` ranges over produced output indices, `rest` over unread inputs.
        let mut x = v.to_vec();
        let mut out = 1usize;
        let mut rest = n;
        for core in &self.cores {
            let rest_next = rest / k;
            let mut y = vec![0.0; out * k * core.right * rest_next];
            for o in 0..out {
                for a in 0..core.left {
                    for j in 0..k {
                        let src = ((o * core.left + a) * k + j) * rest_next;
                        for i in 0..k {
                            for b in 0..core.right {
                                let g = core.get(a, i, j, b);
                                if g == 0.0 {
                                    continue;
                                }
                                let dst = (((o * k + i) * core.right) + b) * rest_next;
                                for t in 0..rest_next {
                                    y[dst + t] += g * x[src + t];
                                }
                            }
                        }
                    }
                }
            }
            x = y;
            out *= k;
            rest = rest_next;
        }
        Ok(x)
    }

    /// ‖ρ_mpo‖_F² by transfer-matrix contraction.
    pub fn frobenius_norm_sq(&self) -> f64 {
        let mut env = DMatrix::from_element(1, 1, 1.0);
        for core in &self.cores {
            let mut next = DMatrix::zeros(core.right, core.right);
            for p in 0..core.k * core.k {
                let g = DMatrix::from_fn(core.left, core.right, |a, b| core.data[(a * core.k * core.k + p) * core.right + b]);
                next += g.transpose() * &env * &g;
            }
            env = next;
        }
        env[(0, 0)]
    }
}

/// Keeps singular values with σ ≥ err·σ_max, at most `max_bond` of them.
/// Returns (kept, cap_hit).
fn truncation_rank(s: &[f64], err: f64, max_bond: usize) -> (usize, bool) {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return (1, false);
    }
    let wanted = s.iter().take_while(|&&v| v >= err * smax && v > 0.0).count().max(1);
    (wanted.min(max_bond), wanted > max_bond)
}

/// Thin SVD with singular values in descending order.
fn sorted_svd(m: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm.thin_svd().map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let sv: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let s: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let vt = DMatrix::from_fn(order.len(), v.nrows(), |r, c| v[(c, order[r])]);
    Ok((u, s, vt))
}

/// Right-to-left SVD truncation sweep. Expects cores 0..D−1 left-orthonormal.
fn right_to_left_truncate(cores: &mut [Core], k: usize, err: f64, max_bond: usize, cap_hit: &mut bool) -> Result<()> {
    for d in (1..cores.len()).rev() {
        let m = cores[d].as_right_matrix();
        let (u, s, vt) = sorted_svd(m)?;
        let (keep, hit) = truncation_rank(&s, err, max_bond);
        *cap_hit |= hit;
        let right = cores[d].right;
        cores[d] = Core::from_right_matrix(&vt.rows(0, keep).into_owned(), k, right);
        let us = DMatrix::from_fn(u.nrows(), keep, |r, c| u[(r, c)] * s[c]);
        let left = cores[d - 1].left;
        let prev = cores[d - 1].as_left_matrix() * us;
        cores[d - 1] = Core::from_left_matrix(&prev, left, k);
    }
    Ok(())
}

fn left_to_right_orthonormalize(cores: &mut [Core], k: usize) {
    for d in 0..cores.len().saturating_sub(1) {
        let left = cores[d].left;
        let qr = cores[d].as_left_matrix().qr();
        let (q, r) = (qr.q(), qr.r());
        cores[d] = Core::from_left_matrix(&q, left, k);
        let right = cores[d + 1].right;
        let next = r * cores[d + 1].as_right_matrix();
        cores[d + 1] = Core::from_right_matrix(&next, k, right);
    }
}

/// TT-SVD of a dense operator: one truncating left-to-right sweep over the
/// site pairs (i_d, j_d), then one right-to-left recompression sweep.
pub fn mpo_from_dense(rho: &DMatrix<f64>, k: usize, dim: usize, err: f64, max_bond: usize) -> Result<(Mpo, bool)> {
    let n = pow_usize(k, dim).ok_or(Error::Size {
        what: "K^D",
        needed: usize::MAX,
        limit: DENSE_LIMIT,
    })?;
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::Contract(format!("operator is {}x{} but K^D = {n}", rho.nrows(), rho.ncols())));
    }
    check_truncation(err, max_bond)?;
    let k2 = k * k;
    // Interleave (i_1 j_1)(i_2 j_2)… with site 1 most significant.
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut p = 0usize;
            let mut scale = 1usize;
            let (mut ii, mut jj) = (i, j);
            for _ in 0..dim {
                p += ((ii % k) * k + (jj % k)) * scale;
                scale *= k2;
                ii /= k;
                jj /= k;
            }
            t[p] = rho[(i, j)];
        }
    }

    let mut cap_hit = false;
    let mut cores = Vec::with_capacity(dim);
    let mut left = 1usize;
    let mut rest = n * n;
    let mut carry = DMatrix::from_row_slice(1, rest, &t);
    for _ in 0..dim - 1 {
        rest /= k2;
        let rows = left * k2;
        let c = DMatrix::from_fn(rows, rest, |r, col| {
            let a = r / k2;
            let p = r % k2;
            carry[(a, p * rest + col)]
        });
        let (u, s, vt) = sorted_svd(c)?;
        let (keep, hit) = truncation_rank(&s, err, max_bond);
        cap_hit |= hit;
        cores.push(Core::from_left_matrix(&u.columns(0, keep).into_owned(), left, k));
        carry = DMatrix::from_fn(keep, vt.ncols(), |r, col| s[r] * vt[(r, col)]);
        left = keep;
    }
    let last = DMatrix::from_fn(left * k2, 1, |r, _| carry[(r / k2, r % k2)]);
    cores.push(Core::from_left_matrix(&last, left, k));
    right_to_left_truncate(&mut cores, k, err, max_bond, &mut cap_hit)?;
    Ok((Mpo::new(cores, k)?, cap_hit))
}

/// Vector TT-SVD: cores of shape left × K × right, stored row-major.
fn mps_from_vector(v: &[f64], k: usize, dim: usize, err: f64, max_bond: usize, cap_hit: &mut bool) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    let mut cores = Vec::with_capacity(dim);
    let mut left = 1usize;
    let mut rest = v.len();
    let mut carry = DMatrix::from_row_slice(1, rest, v);
    for _ in 0..dim - 1 {
        rest /= k;
        let c = DMatrix::from_fn(left * k, rest, |r, col| carry[(r / k, (r % k) * rest + col)]);
        let (u, s, vt) = sorted_svd(c)?;
        let (keep, hit) = truncation_rank(&s, err, max_bond);
        *cap_hit |= hit;
        let mut data = vec![0.0; left * k * keep];
        for r in 0..left * k {
            for b in 0..keep {
                data[r * keep + b] = u[(r, b)];
            }
        }
        cores.push((left, keep, data));
        carry = DMatrix::from_fn(keep, vt.ncols(), |r, col| s[r] * vt[(r, col)]);
        left = keep;
    }
    let mut data = vec![0.0; left * k];
    for a in 0..left {
        for i in 0..k {
            data[a * k + i] = carry[(a, i)];
        }
    }
    cores.push((left, 1, data));
    Ok(cores)
}

/// MPO of W Wᵀ built from per-column MPS, then QR and SVD recompression sweeps.
pub fn mpo_from_factor(w: &DMatrix<f64>, k: usize, dim: usize, err: f64, max_bond: usize) -> Result<(Mpo, bool)> {
    let n = w.nrows();
    if pow_usize(k, dim) != Some(n) {
        return Err(Error::Contract(format!("factor has {n} rows but K^D = {:?}", pow_usize(k, dim))));
    }
    check_truncation(err, max_bond)?;
    let mut cap_hit = false;
    let mps: Vec<_> = (0..w.ncols())
        .map(|c| mps_from_vector(w.column(c).as_slice(), k, dim, err, max_bond, &mut cap_hit))
        .collect::<Result<_>>()?;

    let mut cores = Vec::with_capacity(dim);
    for d in 0..dim {
        let first = d == 0;
        let last = d + 1 == dim;
        let left_dims: Vec<usize> = mps.iter().map(|m| m[d].0 * m[d].0).collect();
        let right_dims: Vec<usize> = mps.iter().map(|m| m[d].1 * m[d].1).collect();
        let left = if first { 1 } else { left_dims.iter().sum() };
        let right = if last { 1 } else { right_dims.iter().sum() };
        let mut core = Core::zeros(left, k, right);
        let mut loff = 0;
        let mut roff = 0;
        for (col, m) in mps.iter().enumerate() {
            let (l, r, ref data) = m[d];
            for a in 0..l {
                for a2 in 0..l {
                    for i in 0..k {
                        for j in 0..k {
                            for b in 0..r {
                                for b2 in 0..r {
                                    let val = data[(a * k + i) * r + b] * data[(a2 * k + j) * r + b2];
                                    let ca = if first { 0 } else { loff + a * l + a2 };
                                    let cb = if last { 0 } else { roff + b * r + b2 };
                                    let idx = core.index(ca, i, j, cb);
                                    core.data[idx] += val;
                                }
                            }
                        }
                    }
                }
            }
            loff += left_dims[col];
            roff += right_dims[col];
        }
        cores.push(core);
    }
    left_to_right_orthonormalize(&mut cores, k);
    right_to_left_truncate(&mut cores, k, err, max_bond, &mut cap_hit)?;
    Ok((Mpo::new(cores, k)?, cap_hit))
}

fn check_truncation(err: f64, max_bond: usize) -> Result<()> {
    if !(err.is_finite() && err >= 0.0) {
        return Err(Error::Config(format!("truncation threshold must be non-negative, got {err}")));
    }
    if max_bond == 0 {
        return Err(Error::Config("max_bond must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    /// ρ as a dense matrix, with its rank factor when known.
    Dense { rho: DMatrix<f64>, factor: Option<DMatrix<f64>> },
    /// ρ = W Wᵀ.
    Factored { w: DMatrix<f64> },
    Mpo(Mpo),
}

/// How one site enters a contraction.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteFactor {
    /// φ(x)φ(x)ᵀ
    Point(f64),
    /// The identity (integrate the coordinate out).
    Integrate,
    /// ∫ₐᵇ φφᵀ
    Interval(f64, f64),
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub value: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxProbability {
    pub value: f64,
    pub raw: f64,
    /// The raw value fell outside [−1e-8, 1 + 1e-8] and was clipped.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BornScore {
    pub score: Vec<f64>,
    /// q(x) was at or below the log floor, so the score is unreliable.
    pub unreliable: bool,
}

/// q(x) = Φ(x)ᵀ ρ Φ(x) over a basis.
#[derive(Debug, Clone)]
pub struct BornModel {
    pub op: Operator,
    pub basis: Basis,
    pub dim: usize,
    pub log_floor: f64,
    pub compression: Option<CompressionReport>,
}

/// ρ = U Uᵀ / r from a ground space, dense when K^D ≤ 4096.
pub fn density_from_ground(gs: &GroundSpace, basis: &Basis, dim: usize) -> Result<BornModel> {
    let n = gs.size();
    if pow_usize(basis.k(), dim) != Some(n) {
        return Err(Error::Contract(format!("ground space of size {n} does not match K^D for K={}, D={dim}", basis.k())));
    }
    let w = &gs.u / (gs.r as f64).sqrt();
    let op = if n <= DENSE_LIMIT {
        let rho = &w * w.transpose();
        Operator::Dense { rho, factor: Some(w) }
    } else {
        Operator::Factored { w }
    };
    Ok(BornModel {
        op,
        basis: basis.clone(),
        dim,
        log_floor: DEFAULT_LOG_FLOOR,
        compression: None,
    })
}

impl BornModel {
    pub fn from_dense(rho: DMatrix<f64>, basis: &Basis, dim: usize) -> Result<Self> {
        let n = pow_usize(basis.k(), dim).unwrap_or(usize::MAX);
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::Contract(format!("ρ is {}x{} but K^D = {n}", rho.nrows(), rho.ncols())));
        }
        Ok(Self {
            op: Operator::Dense { rho, factor: None },
            basis: basis.clone(),
            dim,
            log_floor: DEFAULT_LOG_FLOOR,
            compression: None,
        })
    }

    pub fn from_mpo(mpo: Mpo, basis: &Basis) -> Result<Self> {
        if mpo.k != basis.k() {
            return Err(Error::Contract(format!("MPO has K={} but the basis has K={}", mpo.k, basis.k())));
        }
        Ok(Self {
            dim: mpo.dim(),
            op: Operator::Mpo(mpo),
            basis: basis.clone(),
            log_floor: DEFAULT_LOG_FLOOR,
            compression: None,
        })
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn mpo(&self) -> Option<&Mpo> {
        match &self.op {
            Operator::Mpo(m) => Some(m),
            _ => None,
        }
    }

    pub fn dense_rho(&self) -> Option<&DMatrix<f64>> {
        match &self.op {
            Operator::Dense { rho, .. } => Some(rho),
            _ => None,
        }
    }

    /// Compresses ρ to an MPO, normalizes its trace to one and records the
    /// achieved bonds and reconstruction error.
    pub fn to_mpo(&self, err: f64, max_bond: usize) -> Result<BornModel> {
        let k = self.k();
        let dim = self.dim;
        let n = pow_usize(k, dim).unwrap_or(usize::MAX);
        let (mut mpo, cap_hit, factored) = match &self.op {
            Operator::Dense { rho, factor } => match factor {
                Some(w) if n > DENSE_SWEEP_LIMIT => {
                    let (m, c) = mpo_from_factor(w, k, dim, err, max_bond)?;
                    (m, c, true)
                }
                _ => {
                    let (m, c) = mpo_from_dense(rho, k, dim, err, max_bond)?;
                    (m, c, false)
                }
            },
            Operator::Factored { w } => {
                let (m, c) = mpo_from_factor(w, k, dim, err, max_bond)?;
                (m, c, true)
            }
            Operator::Mpo(m) => {
                let rho = m.to_dense()?;
                let (m, c) = mpo_from_dense(&rho, k, dim, err, max_bond)?;
                (m, c, false)
            }
        };
        let raw_trace = mpo.trace();
        if !(raw_trace.is_finite() && raw_trace > 0.0) {
            return Err(Error::Numerical(format!("compressed operator has trace {raw_trace}")));
        }
        mpo.scale(1.0 / raw_trace);
        let (rho_norm, reconstruction_error) = self.distance_to(&mpo)?;
        let report = CompressionReport {
            err,
            max_bond,
            bonds: mpo.bonds(),
            cap_hit,
            reconstruction_error,
            rho_norm,
            raw_trace,
            factored,
        };
        Ok(BornModel {
            op: Operator::Mpo(mpo),
            basis: self.basis.clone(),
            dim,
            log_floor: self.log_floor,
            compression: Some(report),
        })
    }

    /// (‖ρ‖_F, ‖ρ − ρ_mpo‖_F).
    fn distance_to(&self, mpo: &Mpo) -> Result<(f64, f64)> {
        let n = pow_usize(self.k(), self.dim).unwrap_or(usize::MAX);
        let factor = match &self.op {
            Operator::Dense { factor: Some(w), .. } if n > DENSE_SWEEP_LIMIT => Some(w),
            Operator::Factored { w } => Some(w),
            _ => None,
        };
        if let Some(w) = factor {
            let wtw = w.transpose() * w;
            let rho2 = wtw.norm_squared();
            let mut cross = 0.0;
            for c in 0..w.ncols() {
                let col = w.column(c);
                let y = mpo.apply(col.as_slice())?;
                cross += col.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            }
            let diff2 = (rho2 - 2.0 * cross + mpo.frobenius_norm_sq()).max(0.0);
            return Ok((rho2.sqrt(), diff2.sqrt()));
        }
        let rho = match &self.op {
            Operator::Dense { rho, .. } => rho.clone(),
            Operator::Mpo(m) => m.to_dense()?,
            Operator::Factored { .. } => unreachable!(),
        };
        let approx = mpo.to_dense()?;
        Ok((rho.norm(), (&rho - approx).norm()))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Contract(format!("point of length {} for a {}-dimensional model", x.len(), self.dim)));
        }
        for &v in x {
            crate::error::ensure_finite(v, "x")?;
        }
        Ok(())
    }

    fn site_matrix(&self, f: &SiteFactor) -> Result<DMatrix<f64>> {
        let k = self.k();
        Ok(match f {
            SiteFactor::Point(x) => {
                let phi = nalgebra::DVector::from_vec(self.basis.eval_phi(*x)?);
                &phi * phi.transpose()
            }
            SiteFactor::Integrate => DMatrix::identity(k, k),
            SiteFactor::Interval(a, b) => self.basis.interval(*a, *b)?,
            SiteFactor::Matrix(m) => {
                if m.nrows() != k || m.ncols() != k {
                    return Err(Error::Contract(format!("site matrix must be {k}x{k}")));
                }
                m.clone()
            }
        })
    }

    /// Σ_{I,J} ρ_{IJ} Π_d M_d[i_d, j_d] for one site factor per coordinate.
    pub fn contract(&self, factors: &[SiteFactor]) -> Result<f64> {
        if factors.len() != self.dim {
            return Err(Error::Contract(format!("{} site factors for a {}-site model", factors.len(), self.dim)));
        }
        let mats: Vec<DMatrix<f64>> = factors.iter().map(|f| self.site_matrix(f)).collect::<Result<_>>()?;
        Ok(self.contract_mats(&mats))
    }

    fn contract_mats(&self, mats: &[DMatrix<f64>]) -> f64 {
        match &self.op {
            Operator::Mpo(m) => m.contract(mats),
            Operator::Dense { rho, .. } => contract_dense(rho, mats, self.k()),
            Operator::Factored { w } => (0..w.ncols())
                .map(|c| {
                    let v = w.column(c);
                    let mv = apply_kron(mats, v.as_slice(), self.k());
                    v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum(),
        }
    }

    pub fn trace(&self) -> f64 {
        let id = DMatrix::identity(self.k(), self.k());
        self.contract_mats(&vec![id; self.dim])
    }

    /// q(x).
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let k = self.k();
        let phis: Vec<Vec<f64>> = x.iter().map(|&xd| self.basis.eval_phi(xd)).collect::<Result<_>>()?;
        match &self.op {
            Operator::Mpo(m) => {
                let mut env = vec![1.0];
                let mut w = vec![0.0; k * k];
                for (core, phi) in m.cores.iter().zip(&phis) {
                    for i in 0..k {
                        for j in 0..k {
                            w[i * k + j] = phi[i] * phi[j];
                        }
                    }
                    env = core.absorb(&env, &w);
                }
                Ok(env[0])
            }
            Operator::Dense { rho, .. } => {
                let phi = full_feature(&phis);
                Ok(phi.dot(&(rho * &phi)))
            }
            Operator::Factored { w } => {
                let phi = full_feature(&phis);
                let proj = w.tr_mul(&phi);
                Ok(proj.norm_squared())
            }
        }
    }

    /// log q(x), clamped at the floor.
    pub fn log_eval(&self, x: &[f64]) -> Result<LogDensity> {
        let q = self.eval(x)?;
        if q > self.log_floor {
            Ok(LogDensity { value: q.ln(), clamped: false })
        } else {
            Ok(LogDensity {
                value: self.log_floor.ln(),
                clamped: true,
            })
        }
    }

    /// Density of the coordinates in `sites` at `values`, all others integrated out.
    pub fn marginal_density(&self, sites: &[usize], values: &[f64]) -> Result<f64> {
        if sites.len() != values.len() {
            return Err(Error::Contract(format!("{} sites but {} values", sites.len(), values.len())));
        }
        let mut factors = vec![SiteFactor::Integrate; self.dim];
        for (&s, &v) in sites.iter().zip(values) {
            if s >= self.dim {
                return Err(Error::Input(format!("site {s} out of range for D={}", self.dim)));
            }
            factors[s] = SiteFactor::Point(v);
        }
        self.contract(&factors)
    }

    /// Probability of the box Π_{d∈sites} [a_d, b_d].
    pub fn box_probability(&self, sites: &[usize], intervals: &[(f64, f64)]) -> Result<BoxProbability> {
        if sites.len() != intervals.len() {
            return Err(Error::Contract(format!("{} sites but {} intervals", sites.len(), intervals.len())));
        }
        let mut factors = vec![SiteFactor::Integrate; self.dim];
        for (&s, &(a, b)) in sites.iter().zip(intervals) {
            if s >= self.dim {
                return Err(Error::Input(format!("site {s} out of range for D={}", self.dim)));
            }
            if a.is_nan() || b.is_nan() || a > b {
                return Err(Error::Input(format!("malformed interval [{a}, {b}] on site {s}")));
            }
            factors[s] = SiteFactor::Interval(a, b);
        }
        let raw = self.contract(&factors)?;
        let flagged = !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&raw);
        Ok(BoxProbability {
            value: raw.clamp(0.0, 1.0),
            raw,
            flagged,
        })
    }

    /// ∇ log q(x) = ∇q / q.
    pub fn score(&self, x: &[f64]) -> Result<BornScore> {
        self.check_point(x)?;
        let k = self.k();
        let dim = self.dim;
        let mut phis = vec![vec![0.0; k]; dim];
        let mut dphis = vec![vec![0.0; k]; dim];
        for d in 0..dim {
            self.basis.fill_phi_and_dot(x[d], &mut phis[d], &mut dphis[d]);
        }
        let (q, grad) = match &self.op {
            Operator::Mpo(m) => {
                let pm: Vec<DMatrix<f64>> = (0..dim).map(|d| outer(&phis[d], &phis[d])).collect();
                let reduced: Vec<DMatrix<f64>> = m.cores.iter().zip(&pm).map(|(c, p)| c.reduce(p)).collect();
                let mut lefts = vec![DVector::from_element(1, 1.0)];
                for r in &reduced {
                    let next = r.tr_mul(lefts.last().unwrap());
                    lefts.push(next);
                }
                let mut rights = vec![DVector::from_element(1, 1.0); dim + 1];
                for d in (0..dim).rev() {
                    rights[d] = &reduced[d] * &rights[d + 1];
                }
                let q = lefts[dim][0];
                let grad = (0..dim)
                    .map(|d| {
                        let dm = outer(&dphis[d], &phis[d]) + outer(&phis[d], &dphis[d]);
                        let r = m.cores[d].reduce(&dm);
                        lefts[d].dot(&(r * &rights[d + 1]))
                    })
                    .collect();
                (q, grad)
            }
            Operator::Dense { rho, .. } => {
                let phi = full_feature(&phis);
                let rphi = rho * &phi;
                let q = phi.dot(&rphi);
                let grad = (0..dim)
                    .map(|d| {
                        let mut f = phis.clone();
                        f[d] = dphis[d].clone();
                        2.0 * full_feature(&f).dot(&rphi)
                    })
                    .collect();
                (q, grad)
            }
            Operator::Factored { w } => {
                let phi = full_feature(&phis);
                let proj = w.tr_mul(&phi);
                let q = proj.norm_squared();
                let grad = (0..dim)
                    .map(|d| {
                        let mut f = phis.clone();
                        f[d] = dphis[d].clone();
                        2.0 * w.tr_mul(&full_feature(&f)).dot(&proj)
                    })
                    .collect();
                (q, grad)
            }
        };
        let grad: Vec<f64> = grad;
        if q <= self.log_floor {
            return Ok(BornScore {
                score: vec![0.0; dim],
                unreliable: true,
            });
        }
        Ok(BornScore {
            score: grad.into_iter().map(|g| g / q).collect(),
            unreliable: false,
        })
    }
}

fn outer(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

fn full_feature(phis: &[Vec<f64>]) -> DVector<f64> {
    let n: usize = phis.iter().map(|p| p.len()).product();
    let mut out = vec![0.0; n];
    let factors: Vec<&[f64]> = phis.iter().map(|p| &p[..]).collect();
    kron_into(&factors, &mut out);
    DVector::from_vec(out)
}

/// Σ_{IJ} ρ_{IJ} Π_d M_d[i_d, j_d], peeling one site at a time.
fn contract_dense(rho: &DMatrix<f64>, mats: &[DMatrix<f64>], k: usize) -> f64 {
    let mut cur = rho.clone();
    for m in mats {
        let sub = cur.nrows() / k;
        let mut next = DMatrix::zeros(sub, sub);
        for i in 0..k {
            for j in 0..k {
                let w = m[(i, j)];
                if w != 0.0 {
                    next += w * cur.view((i * sub, j * sub), (sub, sub));
                }
            }
        }
        cur = next;
    }
    cur[(0, 0)]
}

/// (⊗_d M_d) v by successive mode products.
fn apply_kron(mats: &[DMatrix<f64>], v: &[f64], k: usize) -> Vec<f64> {
    let n = v.len();
    let mut x = v.to_vec();
    let mut stride = n;
    for m in mats {
        let inner = stride / k;
        let outer_count = n / stride;
        let mut y = vec![0.0; n];
        for o in 0..outer_count {
            for i in 0..k {
                for j in 0..k {
                    let w = m[(i, j)];
                    if w == 0.0 {
                        continue;
                    }
                    let dst = o * stride + i * inner;
                    let src = o * stride + j * inner;
                    for t in 0..inner {
                        y[dst + t] += w * x[src + t];
                    }
                }
            }
        }
        x = y;
        stride = inner;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron;

    fn product_rho(vs: &[Vec<f64>]) -> DMatrix<f64> {
        let mut rho = DMatrix::from_element(1, 1, 1.0);
        for v in vs {
            let vv = DVector::from_column_slice(v);
            let p = &vv * vv.transpose() / vv.norm_squared();
            rho = kron(&rho, &p);
        }
        rho
    }

    #[test]
    fn maximally_mixed_state_has_unit_bonds() {
        let rho = DMatrix::identity(27, 27) / 27.0;
        let (m, hit) = mpo_from_dense(&rho, 3, 3, 1e-6, 256).unwrap();
        assert_eq!(m.bonds(), vec![1, 1]);
        assert!(!hit);
        assert!((m.to_dense().unwrap() - rho).norm() < 1e-14);
    }

    #[test]
    fn product_state_is_exact_with_unit_bonds() {
        let rho = product_rho(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 1.0]]);
        let (m, _) = mpo_from_dense(&rho, 2, 3, 1e-6, 256).unwrap();
        assert_eq!(m.bonds(), vec![1, 1]);
        assert!((m.to_dense().unwrap() - &rho).norm() <= 1e-12);
    }

    #[test]
    fn single_site_mpo_is_the_matrix() {
        let rho = DMatrix::from_row_slice(2, 2, &[0.7, 0.1, 0.1, 0.3]);
        let (m, _) = mpo_from_dense(&rho, 2, 1, 1e-6, 256).unwrap();
        assert!(m.bonds().is_empty());
        assert!((m.to_dense().unwrap() - rho).norm() < 1e-15);
    }

    #[test]
    fn bond_cap_is_respected_and_flagged() {
        let mut s = crate::rng::stream(3, crate::rng::Tag::Misc, 0);
        use rand::Rng;
        let a = DMatrix::from_fn(16, 16, |_, _| s.random_range(-1.0..1.0));
        let rho = &a * a.transpose();
        let (m, hit) = mpo_from_dense(&rho, 2, 4, 1e-12, 3).unwrap();
        assert!(m.max_bond() <= 3);
        assert!(hit);
    }

    #[test]
    fn mpo_apply_matches_dense() {
        let mut s = crate::rng::stream(4, crate::rng::Tag::Misc, 0);
        use rand::Rng;
        let a = DMatrix::from_fn(8, 8, |_, _| s.random_range(-1.0..1.0));
        let rho = &a * a.transpose();
        let (m, _) = mpo_from_dense(&rho, 2, 3, 0.0, 256).unwrap();
        let v: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let y = m.apply(&v).unwrap();
        let expected = &rho * DVector::from_vec(v);
        for (a, b) in y.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((m.frobenius_norm_sq() - rho.norm_squared()).abs() < 1e-10 * rho.norm_squared());
    }

    #[test]
    fn factored_and_dense_paths_agree() {
        let mut s = crate::rng::stream(5, crate::rng::Tag::Misc, 0);
        use rand::Rng;
        let w = DMatrix::from_fn(16, 2, |_, _| s.random_range(-1.0..1.0));
        let rho = &w * w.transpose();
        let (a, _) = mpo_from_dense(&rho, 2, 4, 1e-12, 256).unwrap();
        let (b, _) = mpo_from_factor(&w, 2, 4, 1e-12, 256).unwrap();
        assert!((a.to_dense().unwrap() - b.to_dense().unwrap()).norm() < 1e-10);
        assert!(b.max_bond() <= dense_bond_bound(2, 4, 2));
    }

    #[test]
    fn dense_bound_is_symmetric() {
        assert_eq!(dense_bond_bound(4, 5, 1), 16);
        assert_eq!(dense_bond_bound(4, 5, 2), 256);
        assert_eq!(dense_bond_bound(4, 5, 3), 256);
        assert_eq!(dense_bond_bound(4, 5, 4), 16);
    }

    #[test]
    fn ground_state_density_at_origin() {
        let basis = Basis::hermite(2).unwrap();
        let mut rho = DMatrix::zeros(2, 2);
        rho[(0, 0)] = 1.0;
        let model = BornModel::from_dense(rho, &basis, 1).unwrap();
        let q = model.eval(&[0.0]).unwrap();
        assert!((q - std::f64::consts::PI.powf(-0.5)).abs() < 1e-14);
        let half = model.box_probability(&[0], &[(f64::NEG_INFINITY, 0.0)]).unwrap();
        assert!((half.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn malformed_box_is_an_input_error() {
        let basis = Basis::hermite(2).unwrap();
        let model = BornModel::from_dense(DMatrix::identity(2, 2) / 2.0, &basis, 1).unwrap();
        assert!(matches!(model.box_probability(&[0], &[(1.0, -1.0)]), Err(Error::Input(_))));
    }

    #[test]
    fn apply_kron_matches_kronecker_product() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.5]);
        let v = [1.0, -2.0, 0.5, 3.0];
        let y = apply_kron(&[a.clone(), b.clone()], &v, 2);
        let expected = kron(&a, &b) * DVector::from_column_slice(&v);
        for (p, q) in y.iter().zip(expected.iter()) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}
