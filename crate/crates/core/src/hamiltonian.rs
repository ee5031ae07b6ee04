//! The Fisher-divergence Hamiltonian.
//!
//! For a Born model with ρ = θθᵀ the Fisher divergence is θᵀHθ with
//!
//! ```text
//! H = ∫ H₁(x) − 2 H₂(x) + 4 H₃(x) dx
//! H₁(x) = ‖s(x)‖² Φ(x)Φ(x)ᵀ
//! H₂(x) = Φ(x) s(x)ᵀ Φ̇(x) + Φ̇(x)ᵀ s(x) Φ(x)ᵀ
//! H₃(x) = Φ̇(x)ᵀ Φ̇(x)
//! ```
//!
//! where row j of the Jacobian Φ̇ replaces the site-j factor φ(x_j) of the
//! feature map by φ̇(x_j). Pointwise the integrand factors as
//! `Σ_j a_j a_jᵀ` with `a_j = 2 Φ̇_j − s_j Φ`, so every quadrature or
//! importance-sampling estimate with positive weights is PSD; the dense
//! accumulators below use that factorization and a single GEMM per chunk.
//!
//! Three constructions are provided:
//!
//! * [`exact_h_quadrature`]: tensor Gauss–Legendre over the proposal box (D ≤ 3).
//! * [`estimate_h_global`]: uniform importance sampling over the whole box.
//! * [`estimate_h_local`]: per-clique sampling of the 3-local blocks, with the
//!   target-independent H₃ part computed from exact 1-D integrals.

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::{kron_into, pow_usize, symmetrize};
use crate::quadrature::GaussLegendre;
use crate::rng::{self, Tag};
use crate::targets::ScoreOracle;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Largest K^D for which dense matrices are materialized.
pub const DENSE_LIMIT: usize = 4096;

/// Default proposal box side length: [-5, 5] per coordinate.
pub const DEFAULT_BOX_WIDTH: f64 = 10.0;

pub const DEFAULT_QUADRATURE_NODES_PER_DIM: usize = 64;

/// Samples per RNG chunk in the global estimator. Fixed so that results do not
/// depend on how many workers process the chunks.
const GLOBAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Quadrature,
    Global,
    Local,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Quadrature => "quadrature",
            EstimatorKind::Global => "global",
            EstimatorKind::Local => "local",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(EstimatorKind::Quadrature),
            "global" => Ok(EstimatorKind::Global),
            "local" => Ok(EstimatorKind::Local),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianMeta {
    pub dim: usize,
    pub k: usize,
    pub estimator: EstimatorKind,
    /// Score queries consumed while building this estimate.
    pub queries: u64,
    pub budget: u64,
    pub box_width: f64,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Which part of `H₁ − 2H₂ + 4H₃` a local term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// H₁: ‖s‖² ΦΦᵀ
    Potential,
    /// H₂: the score/Jacobian cross terms, stored as h + hᵀ
    Cross,
    /// H₃: Φ̇ᵀΦ̇, target independent
    Kinetic,
}

impl Family {
    pub fn coefficient(self) -> f64 {
        match self {
            Family::Potential => 1.0,
            Family::Cross => -2.0,
            Family::Kinetic => 4.0,
        }
    }
}

/// A block acting on the contiguous sites `start..start + width`, identity elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    pub start: usize,
    pub width: usize,
    /// Coordinates sampled to estimate the block (empty for exact terms).
    pub support: Range<usize>,
    pub block: DMatrix<f64>,
    pub coefficient: f64,
    pub family: Family,
    /// Number of samples behind the block (0 for exact terms).
    pub samples: usize,
}

impl LocalTerm {
    pub fn sites(&self) -> Range<usize> {
        self.start..self.start + self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSum {
    pub terms: Vec<LocalTerm>,
    pub meta: HamiltonianMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseHamiltonian {
    pub matrix: DMatrix<f64>,
    pub meta: HamiltonianMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianRep {
    Dense(DenseHamiltonian),
    Local(LocalSum),
}

impl HamiltonianRep {
    pub fn meta(&self) -> &HamiltonianMeta {
        match self {
            HamiltonianRep::Dense(d) => &d.meta,
            HamiltonianRep::Local(l) => &l.meta,
        }
    }

    /// K^D.
    pub fn size(&self) -> usize {
        let m = self.meta();
        pow_usize(m.k, m.dim).unwrap_or(usize::MAX)
    }

    /// Dense matrix, assembling local terms if necessary.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        match self {
            HamiltonianRep::Dense(d) => Ok(d.matrix.clone()),
            HamiltonianRep::Local(l) => assemble_dense(l),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            HamiltonianRep::Dense(d) => {
                if v.len() != d.matrix.ncols() {
                    return Err(Error::Contract(format!("vector of length {} for a {}-dim operator", v.len(), d.matrix.ncols())));
                }
                let x = nalgebra::DVector::from_column_slice(v);
                Ok((&d.matrix * x).iter().copied().collect())
            }
            HamiltonianRep::Local(l) => apply_h(l, v),
        }
    }
}

/// Importance-sampling budget and proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Total score queries B.
    pub budget: u64,
    /// Side length L of the proposal box [-L/2, L/2]^C.
    pub box_width: f64,
    pub seed: u64,
    #[serde(default)]
    pub kinetic: KineticMode,
}

/// How the local estimator obtains the target-independent H₃ blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KineticMode {
    /// One exact 1-site block 4·∫φ̇φ̇ᵀ per coordinate.
    Exact,
    /// Evaluated at the same clique draws as the score terms, so each window
    /// block is a sum of squares (2u − s v)(2u − s v)ᵀ and stays PSD.
    #[default]
    Paired,
}

impl KineticMode {
    pub fn name(self) -> &'static str {
        match self {
            KineticMode::Exact => "exact",
            KineticMode::Paired => "paired",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(KineticMode::Exact),
            "paired" => Ok(KineticMode::Paired),
            other => Err(Error::Config(format!("unknown kinetic mode {other:?}"))),
        }
    }
}

impl SamplingPlan {
    pub fn new(budget: u64, seed: u64) -> Self {
        Self {
            budget,
            box_width: DEFAULT_BOX_WIDTH,
            seed,
            kinetic: KineticMode::default(),
        }
    }

    /// Uniform proposal density on a C-dimensional box.
    pub fn proposal_density(&self, c: usize) -> f64 {
        self.box_width.powi(-(c as i32))
    }

    /// Splits the budget over `edges` edges: ⌊B/E⌋ each, remainder to the first edges.
    pub fn per_edge(&self, edges: usize) -> Vec<usize> {
        if edges == 0 {
            return Vec::new();
        }
        let base = (self.budget / edges as u64) as usize;
        let extra = (self.budget % edges as u64) as usize;
        (0..edges).map(|e| base + usize::from(e < extra)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("query budget B must be at least 1".into()));
        }
        if !(self.box_width.is_finite() && self.box_width > 0.0) {
            return Err(Error::Config(format!("box width must be positive, got {}", self.box_width)));
        }
        Ok(())
    }
}

fn dense_size(k: usize, dim: usize) -> Result<usize> {
    match pow_usize(k, dim) {
        Some(n) if n <= DENSE_LIMIT => Ok(n),
        Some(n) => Err(Error::Size {
            what: "dense Hamiltonian K^D",
            needed: n,
            limit: DENSE_LIMIT,
        }),
        None => Err(Error::Size {
            what: "dense Hamiltonian K^D",
            needed: usize::MAX,
            limit: DENSE_LIMIT,
        }),
    }
}

/// Per-point features: φ(x_d) and φ̇(x_d) for every coordinate.
struct PointFeatures {
    phi: Vec<Vec<f64>>,
    dphi: Vec<Vec<f64>>,
}

impl PointFeatures {
    fn new(basis: &Basis, x: &[f64]) -> Self {
        let k = basis.k();
        let mut phi = vec![vec![0.0; k]; x.len()];
        let mut dphi = vec![vec![0.0; k]; x.len()];
        for (d, &xd) in x.iter().enumerate() {
            basis.fill_phi_and_dot(xd, &mut phi[d], &mut dphi[d]);
        }
        Self { phi, dphi }
    }

    /// Φ(x), or the Jacobian row j when `deriv_at = Some(j)`.
    fn product(&self, deriv_at: Option<usize>, out: &mut [f64]) {
        let factors: Vec<&[f64]> = (0..self.phi.len())
            .map(|d| if Some(d) == deriv_at { &self.dphi[d][..] } else { &self.phi[d][..] })
            .collect();
        kron_into(&factors, out);
    }
}

/// The three pointwise blocks at x.
#[derive(Debug, Clone, PartialEq)]
pub struct HBlocks {
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    pub h3: DMatrix<f64>,
}

impl HBlocks {
    /// H₁ − 2H₂ + 4H₃.
    pub fn combined(&self) -> DMatrix<f64> {
        &self.h1 - 2.0 * &self.h2 + 4.0 * &self.h3
    }
}

pub fn h_blocks_at(basis: &Basis, target: &dyn ScoreOracle, x: &[f64]) -> Result<HBlocks> {
    let dim = target.dim();
    let n = dense_size(basis.k(), dim)?;
    let s = target.score(x)?;
    let feats = PointFeatures::new(basis, x);
    let mut phi = vec![0.0; n];
    feats.product(None, &mut phi);
    let phi = nalgebra::DVector::from_vec(phi);

    let mut jac = DMatrix::zeros(dim, n);
    let mut row = vec![0.0; n];
    for j in 0..dim {
        feats.product(Some(j), &mut row);
        for (c, v) in row.iter().enumerate() {
            jac[(j, c)] = *v;
        }
    }
    let s_vec = nalgebra::DVector::from_vec(s);
    let norm2 = s_vec.norm_squared();
    let h1 = norm2 * &phi * phi.transpose();
    // Φ sᵀ Φ̇ + Φ̇ᵀ s Φᵀ
    let g = jac.transpose() * &s_vec;
    let h2 = &phi * g.transpose() + &g * phi.transpose();
    let h3 = jac.transpose() * &jac;
    Ok(HBlocks { h1, h2, h3 })
}

/// Accumulates Σ w_i Σ_j a_j(x_i) a_j(x_i)ᵀ over a batch of weighted points.
fn accumulate_batch(basis: &Basis, points: &[(Vec<f64>, Vec<f64>, f64)], n: usize) -> DMatrix<f64> {
    let dim = points.first().map_or(0, |p| p.0.len());
    let cols = points.len() * dim;
    let mut stacked = DMatrix::zeros(n, cols);
    let mut phi = vec![0.0; n];
    let mut row = vec![0.0; n];
    for (i, (x, s, w)) in points.iter().enumerate() {
        let feats = PointFeatures::new(basis, x);
        feats.product(None, &mut phi);
        let sw = w.sqrt();
        for j in 0..dim {
            feats.product(Some(j), &mut row);
            let mut col = stacked.column_mut(i * dim + j);
            for c in 0..n {
                col[c] = sw * (2.0 * row[c] - s[j] * phi[c]);
            }
        }
    }
    &stacked * stacked.transpose()
}

/// H over the box [-L/2, L/2]^D by tensor Gauss–Legendre quadrature.
pub fn exact_h_quadrature(basis: &Basis, target: &dyn ScoreOracle, box_width: f64, nodes_per_dim: usize) -> Result<DenseHamiltonian> {
    let dim = target.dim();
    if dim > 3 {
        return Err(Error::Size {
            what: "quadrature dimension D",
            needed: dim,
            limit: 3,
        });
    }
    let n = dense_size(basis.k(), dim)?;
    if nodes_per_dim == 0 {
        return Err(Error::Config("quadrature needs at least one node per dimension".into()));
    }
    let rule = GaussLegendre::new(nodes_per_dim);
    let half = 0.5 * box_width;
    let nodes: Vec<(f64, f64)> = rule.on_interval(-half, half).collect();
    let total = pow_usize(nodes_per_dim, dim).ok_or(Error::Size {
        what: "quadrature grid",
        needed: usize::MAX,
        limit: usize::MAX,
    })?;

    let mut h = DMatrix::zeros(n, n);
    let mut batch = Vec::with_capacity(GLOBAL_CHUNK);
    for idx in 0..total {
        let mut rem = idx;
        let mut x = vec![0.0; dim];
        let mut w = 1.0;
        for d in (0..dim).rev() {
            let (xn, wn) = nodes[rem % nodes_per_dim];
            rem /= nodes_per_dim;
            x[d] = xn;
            w *= wn;
        }
        let s = target.score(&x)?;
        batch.push((x, s, w));
        if batch.len() == GLOBAL_CHUNK || idx + 1 == total {
            h += accumulate_batch(basis, &batch, n);
            batch.clear();
        }
    }
    symmetrize(&mut h);

    let mut warnings = Vec::new();
    let (vals, _) = crate::linalg::sorted_eigen(&h);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&lmin) = vals.first() {
        if lmin < -1e-6 * scale {
            warnings.push(format!("quadrature H is indefinite: lambda_min = {lmin:.3e} (|H| = {scale:.3e}); refine the grid"));
        }
    }
    Ok(DenseHamiltonian {
        matrix: h,
        meta: HamiltonianMeta {
            dim,
            k: basis.k(),
            estimator: EstimatorKind::Quadrature,
            queries: total as u64,
            budget: total as u64,
            box_width,
            seed: 0,
            warnings,
        },
    })
}

/// Global importance-sampling estimate with a uniform proposal on the whole box.
pub fn estimate_h_global(basis: &Basis, target: &dyn ScoreOracle, plan: &SamplingPlan) -> Result<DenseHamiltonian> {
    plan.validate()?;
    let dim = target.dim();
    let n = dense_size(basis.k(), dim)?;
    let budget = plan.budget as usize;
    let weight = 1.0 / (plan.proposal_density(dim) * budget as f64);
    let half = 0.5 * plan.box_width;
    let chunks = budget.div_ceil(GLOBAL_CHUNK);
    let group = rayon::current_num_threads().max(1);

    let mut h = DMatrix::zeros(n, n);
    let mut start = 0;
    while start < chunks {
        let end = (start + group).min(chunks);
        let partials: Vec<Result<DMatrix<f64>>> = (start..end)
            .into_par_iter()
            .map(|c| {
                let count = GLOBAL_CHUNK.min(budget - c * GLOBAL_CHUNK);
                let mut stream = rng::stream(plan.seed, Tag::GlobalChunk, c as u64);
                let mut batch = Vec::with_capacity(count);
                for _ in 0..count {
                    let x: Vec<f64> = (0..dim).map(|_| stream.random_range(-half..half)).collect();
                    let s = target.score(&x)?;
                    batch.push((x, s, weight));
                }
                Ok(accumulate_batch(basis, &batch, n))
            })
            .collect();
        for p in partials {
            h += p?;
        }
        start = end;
    }
    symmetrize(&mut h);
    Ok(DenseHamiltonian {
        matrix: h,
        meta: HamiltonianMeta {
            dim,
            k: basis.k(),
            estimator: EstimatorKind::Global,
            queries: plan.budget,
            budget: plan.budget,
            box_width: plan.box_width,
            seed: plan.seed,
            warnings: Vec::new(),
        },
    })
}

/// Local estimate: for every score component j, sample its clique uniformly and
/// estimate the H₁ and H₂ blocks on that window. H₃ is either exact and 1-local
/// or evaluated at the same draws (see [`KineticMode`]).
pub fn estimate_h_local(basis: &Basis, target: &dyn ScoreOracle, plan: &SamplingPlan) -> Result<LocalSum> {
    plan.validate()?;
    let dim = target.dim();
    let k = basis.k();
    let cliques: Vec<Range<usize>> = (0..dim).map(|j| target.clique(j)).collect();
    for (j, c) in cliques.iter().enumerate() {
        if !c.contains(&j) || c.len() > 3 || c.end > dim {
            return Err(Error::Contract(format!(
                "score component {j} has clique {c:?}; local estimation needs a window of at most 3 sites around it"
            )));
        }
    }
    let per_edge = plan.per_edge(dim);
    let paired = plan.kinetic == KineticMode::Paired;
    let dgram = basis.overlap_matrices()?.dgram;

    let blocks: Vec<Result<Vec<LocalTerm>>> = (0..dim)
        .into_par_iter()
        .map(|j| local_blocks(basis, target, plan, j, cliques[j].clone(), per_edge[j], paired, &dgram))
        .collect();

    let mut terms = Vec::with_capacity(3 * dim);
    for b in blocks {
        terms.extend(b?);
    }

    Ok(LocalSum {
        terms,
        meta: HamiltonianMeta {
            dim,
            k,
            estimator: EstimatorKind::Local,
            queries: plan.budget,
            budget: plan.budget,
            box_width: plan.box_width,
            seed: plan.seed,
            warnings: Vec::new(),
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn local_blocks(
    basis: &Basis,
    target: &dyn ScoreOracle,
    plan: &SamplingPlan,
    j: usize,
    clique: Range<usize>,
    m: usize,
    paired: bool,
    dgram: &DMatrix<f64>,
) -> Result<Vec<LocalTerm>> {
    let k = basis.k();
    let w = clique.len();
    let size = k.pow(w as u32);
    let pos = j - clique.start;
    let half = 0.5 * plan.box_width;
    let mut h1 = DMatrix::zeros(size, size);
    let mut h2 = DMatrix::zeros(size, size);
    let mut h3 = DMatrix::zeros(size, size);
    let mut stream = rng::stream(plan.seed, Tag::LocalEdge, j as u64);
    let mut phi = vec![vec![0.0; k]; w];
    let mut dphi = vec![vec![0.0; k]; w];
    let mut v = vec![0.0; size];
    let mut u = vec![0.0; size];
    let mut vals = vec![0.0; w];
    for _ in 0..m {
        for x in vals.iter_mut() {
            *x = stream.random_range(-half..half);
        }
        let s = target.local_score(j, &vals)?;
        for d in 0..w {
            basis.fill_phi_and_dot(vals[d], &mut phi[d], &mut dphi[d]);
        }
        let fv: Vec<&[f64]> = phi.iter().map(|p| &p[..]).collect();
        kron_into(&fv, &mut v);
        let fu: Vec<&[f64]> = (0..w).map(|d| if d == pos { &dphi[d][..] } else { &phi[d][..] }).collect();
        kron_into(&fu, &mut u);
        let s2 = s * s;
        for b in 0..size {
            let vb = v[b];
            let ub = u[b];
            let mut c1 = h1.column_mut(b);
            for a in 0..size {
                c1[a] += s2 * v[a] * vb;
            }
            let mut c2 = h2.column_mut(b);
            for a in 0..size {
                c2[a] += s * v[a] * ub;
            }
            if paired {
                let mut c3 = h3.column_mut(b);
                for a in 0..size {
                    c3[a] += u[a] * ub;
                }
            }
        }
    }
    if m > 0 {
        let scale = 1.0 / (plan.proposal_density(w) * m as f64);
        h1 *= scale;
        h2 *= scale;
        h3 *= scale;
    }
    let mut cross = &h2 + h2.transpose();
    symmetrize(&mut h1);
    symmetrize(&mut cross);
    symmetrize(&mut h3);
    let term = |block: DMatrix<f64>, family: Family| LocalTerm {
        start: clique.start,
        width: w,
        support: clique.clone(),
        block,
        coefficient: family.coefficient(),
        family,
        samples: m,
    };
    let mut out = vec![term(h1, Family::Potential), term(cross, Family::Cross)];
    if paired && m > 0 {
        out.push(term(h3, Family::Kinetic));
    } else {
        out.push(LocalTerm {
            start: j,
            width: 1,
            support: j..j,
            block: dgram.clone(),
            coefficient: Family::Kinetic.coefficient(),
            family: Family::Kinetic,
            samples: 0,
        });
    }
    Ok(out)
}

/// Σ_e c_e · (I ⊗ block_e ⊗ I) as a dense K^D × K^D matrix.
pub fn assemble_dense(local: &LocalSum) -> Result<DMatrix<f64>> {
    let dim = local.meta.dim;
    let k = local.meta.k;
    let n = dense_size(k, dim)?;
    let mut h = DMatrix::zeros(n, n);
    for t in &local.terms {
        check_term(t, dim, k)?;
        let mid = k.pow(t.width as u32);
        let right = k.pow((dim - t.start - t.width) as u32);
        let left = k.pow(t.start as u32);
        for l in 0..left {
            for r in 0..right {
                for b in 0..mid {
                    let col = (l * mid + b) * right + r;
                    for a in 0..mid {
                        let row = (l * mid + a) * right + r;
                        h[(row, col)] += t.coefficient * t.block[(a, b)];
                    }
                }
            }
        }
    }
    symmetrize(&mut h);
    Ok(h)
}

fn check_term(t: &LocalTerm, dim: usize, k: usize) -> Result<()> {
    let mid = k.pow(t.width as u32);
    if t.width == 0 || t.start + t.width > dim || t.block.nrows() != mid || t.block.ncols() != mid {
        return Err(Error::Contract(format!(
            "local term on sites {}..{} with a {}x{} block does not fit D={dim}, K={k}",
            t.start,
            t.start + t.width,
            t.block.nrows(),
            t.block.ncols()
        )));
    }
    Ok(())
}

/// Matrix-free product (Σ_e c_e I ⊗ block_e ⊗ I) v.
pub fn apply_h(local: &LocalSum, v: &[f64]) -> Result<Vec<f64>> {
    let dim = local.meta.dim;
    let k = local.meta.k;
    let n = pow_usize(k, dim).ok_or(Error::Size {
        what: "state vector K^D",
        needed: usize::MAX,
        limit: usize::MAX,
    })?;
    if v.len() != n {
        return Err(Error::Contract(format!("vector of length {} for an operator on K^D = {n}", v.len())));
    }
    let mut y = vec![0.0; n];
    let mut gather = Vec::new();
    for t in &local.terms {
        check_term(t, dim, k)?;
        let mid = k.pow(t.width as u32);
        let right = k.pow((dim - t.start - t.width) as u32);
        let left = k.pow(t.start as u32);
        gather.resize(mid, 0.0);
        for l in 0..left {
            for r in 0..right {
                for b in 0..mid {
                    gather[b] = v[(l * mid + b) * right + r];
                }
                for a in 0..mid {
                    let mut acc = 0.0;
                    for b in 0..mid {
                        acc += t.block[(a, b)] * gather[b];
                    }
                    y[(l * mid + a) * right + r] += t.coefficient * acc;
                }
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{make_target, TargetKind, TargetParams};

    fn meta(dim: usize, k: usize) -> HamiltonianMeta {
        HamiltonianMeta {
            dim,
            k,
            estimator: EstimatorKind::Local,
            queries: 0,
            budget: 0,
            box_width: DEFAULT_BOX_WIDTH,
            seed: 0,
            warnings: vec![],
        }
    }

    fn term(start: usize, block: DMatrix<f64>, k: usize, c: f64) -> LocalTerm {
        let width = (block.nrows() as f64).log(k as f64).round() as usize;
        LocalTerm {
            start,
            width,
            support: start..start + width,
            block,
            coefficient: c,
            family: Family::Potential,
            samples: 0,
        }
    }

    #[test]
    fn single_site_term_lifts_to_block_kron_identity() {
        let block = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let sum = LocalSum {
            terms: vec![term(0, block.clone(), 2, 1.0)],
            meta: meta(2, 2),
        };
        let h = assemble_dense(&sum).unwrap();
        assert_eq!(h, block.kronecker(&DMatrix::identity(2, 2)));
    }

    #[test]
    fn zero_local_sum_is_zero() {
        let sum = LocalSum { terms: vec![], meta: meta(3, 2) };
        assert_eq!(assemble_dense(&sum).unwrap(), DMatrix::zeros(8, 8));
        assert_eq!(apply_h(&sum, &[1.0; 8]).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn identity_blocks_scale_by_coefficient_sum() {
        let sum = LocalSum {
            terms: vec![
                term(0, DMatrix::identity(4, 4), 2, 0.5),
                term(1, DMatrix::identity(2, 2), 2, -3.0),
                term(1, DMatrix::identity(4, 4), 2, 4.0),
            ],
            meta: meta(3, 2),
        };
        let v: Vec<f64> = (0..8).map(|i| i as f64 - 2.5).collect();
        let y = apply_h(&sum, &v).unwrap();
        for (a, b) in y.iter().zip(&v) {
            assert!((a - 1.5 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_score_leaves_only_the_kinetic_part() {
        let basis = Basis::hermite(2).unwrap();
        let t = make_target(&TargetParams::new(TargetKind::GaussianTridiag), 2).unwrap();
        let b = h_blocks_at(&basis, &t, &[0.0, 0.0]).unwrap();
        assert_eq!(b.h1, DMatrix::zeros(4, 4));
        assert_eq!(b.h2, DMatrix::zeros(4, 4));
        assert!(b.h3.amax() > 0.0);
    }

    #[test]
    fn kinetic_block_does_not_depend_on_the_target() {
        let basis = Basis::hermite(2).unwrap();
        let a = make_target(&TargetParams::new(TargetKind::GaussianTridiag), 2).unwrap();
        let b = make_target(&TargetParams::new(TargetKind::Ring), 2).unwrap();
        let x = [0.4, -1.2];
        let ha = h_blocks_at(&basis, &a, &x).unwrap().h3;
        let hb = h_blocks_at(&basis, &b, &x).unwrap().h3;
        let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ha), bits(&hb));
    }

    #[test]
    fn paired_window_blocks_are_psd() {
        let basis = Basis::hermite(2).unwrap();
        let t = make_target(&TargetParams::new(TargetKind::Funnel), 4).unwrap();
        let mut plan = SamplingPlan::new(40, 9);
        plan.kinetic = KineticMode::Paired;
        let sum = estimate_h_local(&basis, &t, &plan).unwrap();
        assert_eq!(sum.terms.len(), 12);
        for group in sum.terms.chunks(3) {
            let mut window = DMatrix::zeros(group[0].block.nrows(), group[0].block.nrows());
            for term in group {
                assert_eq!(term.support, group[0].support);
                window += &term.block * term.coefficient;
            }
            let min = window.clone().symmetric_eigenvalues().min();
            assert!(min >= -1e-10 * window.amax(), "{min}");
        }
    }

    #[test]
    fn single_sample_global_estimate_is_the_scaled_integrand() {
        let basis = Basis::hermite(2).unwrap();
        let t = make_target(&TargetParams::new(TargetKind::GaussianTridiag), 2).unwrap();
        let plan = SamplingPlan::new(1, 5);
        let est = estimate_h_global(&basis, &t, &plan).unwrap();
        let mut stream = rng::stream(5, Tag::GlobalChunk, 0);
        let x: Vec<f64> = (0..2).map(|_| stream.random_range(-5.0..5.0)).collect();
        let expected = h_blocks_at(&basis, &t, &x).unwrap().combined() * 100.0;
        assert!((&est.matrix - &expected).amax() < 1e-10 * expected.amax());
    }

    #[test]
    fn zero_budget_is_rejected() {
        let basis = Basis::hermite(2).unwrap();
        let t = make_target(&TargetParams::new(TargetKind::GaussianTridiag), 2).unwrap();
        assert!(matches!(estimate_h_global(&basis, &t, &SamplingPlan::new(0, 1)), Err(Error::Config(_))));
        assert!(matches!(estimate_h_local(&basis, &t, &SamplingPlan::new(0, 1)), Err(Error::Config(_))));
    }

    #[test]
    fn dense_cap_is_enforced() {
        let basis = Basis::hermite(4).unwrap();
        let t = make_target(&TargetParams::new(TargetKind::GaussianTridiag), 7).unwrap();
        assert!(matches!(estimate_h_global(&basis, &t, &SamplingPlan::new(10, 1)), Err(Error::Size { .. })));
    }

    #[test]
    fn budget_split_covers_every_query() {
        let plan = SamplingPlan::new(17, 0);
        let m = plan.per_edge(5);
        assert_eq!(m, vec![4, 4, 3, 3, 3]);
        assert_eq!(m.iter().sum::<usize>(), 17);
    }
}
