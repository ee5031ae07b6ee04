//! Score-queryable synthetic targets.
//!
//! Every target has an exact sampler, an exactly normalized log-density and an
//! analytic score. Score components only depend on nearest neighbours along the
//! coordinate chain, which is what makes the Hamiltonian local.
//!
//! The Gaussian target is built directly in D dimensions from a tridiagonal
//! precision matrix. The four two-dimensional targets are lifted to D
//! dimensions by a nonlinear Markov chain `z_i = h_i(z_{i-1}) + σ_aug ε_i`
//! started at `z_0 = x_2`, with the maps `h_i` taken in order from a fixed
//! [`FunctionBank`].

use crate::error::{Error, Result};
use crate::fixtures;
use crate::rng::{self, Tag};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Anything that answers score queries with path-local structure.
pub trait ScoreOracle: Sync {
    fn dim(&self) -> usize;

    /// Half-open range of coordinates the j-th score component depends on.
    fn clique(&self, j: usize) -> Range<usize>;

    /// Full score ∇log p(x). Counts as one query.
    fn score(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Component j of the score from the values on `clique(j)` only. Counts as one query.
    fn local_score(&self, j: usize, clique_values: &[f64]) -> Result<f64>;

    /// Total number of score queries answered so far.
    fn query_count(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    GaussianTridiag,
    Gmm3,
    Xshape,
    Ring,
    Funnel,
}

impl TargetKind {
    pub const ALL: [TargetKind; 5] = [
        TargetKind::GaussianTridiag,
        TargetKind::Gmm3,
        TargetKind::Xshape,
        TargetKind::Ring,
        TargetKind::Funnel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::GaussianTridiag => "gaussian-tridiag",
            TargetKind::Gmm3 => "gmm3",
            TargetKind::Xshape => "xshape",
            TargetKind::Ring => "ring",
            TargetKind::Funnel => "funnel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gaussian-tridiag" => Ok(TargetKind::GaussianTridiag),
            "gmm3" | "gmm-3" => Ok(TargetKind::Gmm3),
            "xshape" | "x-shape" => Ok(TargetKind::Xshape),
            "ring" => Ok(TargetKind::Ring),
            "funnel" => Ok(TargetKind::Funnel),
            other => Err(Error::Config(format!("unknown target kind {other:?}"))),
        }
    }
}

/// Parameters of a target; serializable into the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub kind: TargetKind,
    /// Noise scale of the lifting chain.
    #[serde(default = "default_sigma_aug")]
    pub sigma_aug: f64,
    /// Off-diagonal entry of the Gaussian precision.
    #[serde(default = "default_offdiag")]
    pub offdiag: f64,
    /// Diagonal entry of the Gaussian precision.
    #[serde(default = "default_diag")]
    pub diag: f64,
}

fn default_sigma_aug() -> f64 {
    fixtures::DEFAULT_SIGMA_AUG
}
fn default_offdiag() -> f64 {
    fixtures::DEFAULT_OFFDIAG
}
fn default_diag() -> f64 {
    1.0
}

impl TargetParams {
    pub fn new(kind: TargetKind) -> Self {
        Self {
            kind,
            sigma_aug: fixtures::DEFAULT_SIGMA_AUG,
            offdiag: fixtures::DEFAULT_OFFDIAG,
            diag: 1.0,
        }
    }

    /// A product Gaussian with per-coordinate variance `var` (offdiag 0).
    pub fn isotropic_gaussian(var: f64) -> Self {
        Self {
            kind: TargetKind::GaussianTridiag,
            sigma_aug: fixtures::DEFAULT_SIGMA_AUG,
            offdiag: 0.0,
            diag: 1.0 / var,
        }
    }
}

/// One map of the lifting bank: `sign · 1.5 · shape(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankShape {
    Sin,
    Cos,
    Sin2,
    Cos2,
    SigmoidShift,
    Tanh2,
    Tanh4,
    SinTanh,
    CosTanh,
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankFn {
    pub shape: BankShape,
    pub sign: f64,
}

impl BankFn {
    pub fn value(&self, x: f64) -> f64 {
        let g = match self.shape {
            BankShape::Sin => x.sin(),
            BankShape::Cos => x.cos(),
            BankShape::Sin2 => (2.0 * x).sin(),
            BankShape::Cos2 => (2.0 * x).cos(),
            BankShape::SigmoidShift => sigmoid(4.0 * x) - 0.5,
            BankShape::Tanh2 => (2.0 * x).tanh(),
            BankShape::Tanh4 => (4.0 * x).tanh(),
            BankShape::SinTanh => x.sin() * x.tanh(),
            BankShape::CosTanh => x.cos() * x.tanh(),
            BankShape::Rational => x / (1.0 + x * x),
        };
        self.sign * fixtures::BANK_AMPLITUDE * g
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let g = match self.shape {
            BankShape::Sin => x.cos(),
            BankShape::Cos => -x.sin(),
            BankShape::Sin2 => 2.0 * (2.0 * x).cos(),
            BankShape::Cos2 => -2.0 * (2.0 * x).sin(),
            BankShape::SigmoidShift => {
                let s = sigmoid(4.0 * x);
                4.0 * s * (1.0 - s)
            }
            BankShape::Tanh2 => 2.0 * (1.0 - (2.0 * x).tanh().powi(2)),
            BankShape::Tanh4 => 4.0 * (1.0 - (4.0 * x).tanh().powi(2)),
            BankShape::SinTanh => {
                let t = x.tanh();
                x.cos() * t + x.sin() * (1.0 - t * t)
            }
            BankShape::CosTanh => {
                let t = x.tanh();
                -x.sin() * t + x.cos() * (1.0 - t * t)
            }
            BankShape::Rational => {
                let d = 1.0 + x * x;
                (1.0 - x * x) / (d * d)
            }
        };
        self.sign * fixtures::BANK_AMPLITUDE * g
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The fixed, ordered bank of smooth maps used by the lifting chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionBank {
    fns: Vec<BankFn>,
}

impl Default for FunctionBank {
    fn default() -> Self {
        use BankShape::*;
        let shapes = [Sin, Cos, Sin2, Cos2, SigmoidShift, Tanh2, Tanh4, SinTanh, CosTanh, Rational];
        let fns = shapes
            .iter()
            .flat_map(|&shape| [BankFn { shape, sign: 1.0 }, BankFn { shape, sign: -1.0 }])
            .collect();
        Self { fns }
    }
}

impl FunctionBank {
    pub fn len(&self) -> usize {
        self.fns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fns.is_empty()
    }

    /// The first `n` maps, cycling through the bank when `n` exceeds its size.
    pub fn take(&self, n: usize) -> Vec<BankFn> {
        self.fns.iter().cycle().take(n).copied().collect()
    }
}

#[derive(Debug, Clone)]
struct GaussComponent {
    log_weight: f64,
    mean: Vector2<f64>,
    precision: Matrix2<f64>,
    chol: Matrix2<f64>,
    log_norm: f64,
}

#[derive(Debug, Clone)]
enum Base2d {
    Mixture(Vec<GaussComponent>),
    Ring { radius: f64, sigma: f64, log_z: f64 },
    Funnel { sigma: f64 },
}

impl Base2d {
    fn mixture(params: &[fixtures::Component]) -> Self {
        let comps = params
            .iter()
            .map(|&(w, m, c)| {
                let cov = Matrix2::new(c[0], c[1], c[2], c[3]);
                let chol = cov.cholesky().expect("fixture covariance is positive definite").l();
                let precision = cov.try_inverse().expect("fixture covariance is invertible");
                let log_det = cov.determinant().ln();
                GaussComponent {
                    log_weight: w.ln(),
                    mean: Vector2::new(m[0], m[1]),
                    precision,
                    chol,
                    log_norm: -LN_2PI - 0.5 * log_det,
                }
            })
            .collect();
        Base2d::Mixture(comps)
    }

    fn ring(radius: f64, sigma: f64) -> Self {
        // ∫₀^∞ 2πr exp(-(r-μ)²/2σ²) dr = 2π[σ² e^{-μ²/2σ²} + μσ√(2π) Φ(μ/σ)]
        let phi = 0.5 * libm::erfc(-radius / (sigma * std::f64::consts::SQRT_2));
        let z = 2.0 * PI * (sigma * sigma * (-radius * radius / (2.0 * sigma * sigma)).exp() + radius * sigma * (2.0 * PI).sqrt() * phi);
        Base2d::Ring { radius, sigma, log_z: z.ln() }
    }

    fn component_log_densities(comps: &[GaussComponent], x: Vector2<f64>) -> Vec<f64> {
        comps
            .iter()
            .map(|c| {
                let d = x - c.mean;
                c.log_weight + c.log_norm - 0.5 * d.dot(&(c.precision * d))
            })
            .collect()
    }

    fn log_density(&self, x1: f64, x2: f64) -> f64 {
        match self {
            Base2d::Mixture(comps) => log_sum_exp(&Self::component_log_densities(comps, Vector2::new(x1, x2))),
            Base2d::Ring { radius, sigma, log_z } => {
                let r = x1.hypot(x2);
                -(r - radius).powi(2) / (2.0 * sigma * sigma) - log_z
            }
            Base2d::Funnel { sigma } => {
                let v1 = sigma * sigma;
                -0.5 * LN_2PI - 0.5 * v1.ln() - 0.5 * x1 * x1 / v1 - 0.5 * LN_2PI - 0.5 * x1 - 0.5 * x2 * x2 * (-x1).exp()
            }
        }
    }

    fn score(&self, x1: f64, x2: f64) -> [f64; 2] {
        match self {
            Base2d::Mixture(comps) => {
                let x = Vector2::new(x1, x2);
                let logs = Self::component_log_densities(comps, x);
                let lse = log_sum_exp(&logs);
                let mut s = Vector2::zeros();
                for (c, l) in comps.iter().zip(&logs) {
                    let resp = (l - lse).exp();
                    s -= resp * (c.precision * (x - c.mean));
                }
                [s[0], s[1]]
            }
            Base2d::Ring { radius, sigma, .. } => {
                let r = x1.hypot(x2);
                if r == 0.0 {
                    // Cone tip: the radial term is not differentiable here.
                    return [0.0, 0.0];
                }
                let f = -(r - radius) / (sigma * sigma * r);
                [f * x1, f * x2]
            }
            Base2d::Funnel { sigma } => {
                let e = (-x1).exp();
                [-x1 / (sigma * sigma) - 0.5 + 0.5 * x2 * x2 * e, -x2 * e]
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            Base2d::Mixture(comps) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = comps.len() - 1;
                for (i, c) in comps.iter().enumerate() {
                    acc += c.log_weight.exp();
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let c = &comps[pick];
                let z = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
                let x = c.mean + c.chol * z;
                [x[0], x[1]]
            }
            Base2d::Ring { radius, sigma, .. } => {
                // Radial density ∝ r·N(r; μ, σ²) on r > 0. Propose N(μ + δ, σ²) and
                // accept with probability c·e·r·e^{-c r}, c = δ/σ², which is exact.
                let delta = sigma * sigma / radius;
                let c = delta / (sigma * sigma);
                let r = loop {
                    let r = radius + delta + sigma * rng.sample::<f64, _>(StandardNormal);
                    if r <= 0.0 {
                        continue;
                    }
                    let accept = c * std::f64::consts::E * r * (-c * r).exp();
                    if rng.random::<f64>() < accept {
                        break r;
                    }
                };
                let theta = 2.0 * PI * rng.random::<f64>();
                [r * theta.cos(), r * theta.sin()]
            }
            Base2d::Funnel { sigma } => {
                let x1 = sigma * rng.sample::<f64, _>(StandardNormal);
                let x2 = (0.5 * x1).exp() * rng.sample::<f64, _>(StandardNormal);
                [x1, x2]
            }
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone)]
enum Model {
    Gaussian {
        diag: f64,
        off: f64,
        /// Lower Cholesky factor of the precision.
        chol: DMatrix<f64>,
        log_det: f64,
    },
    Lifted {
        base: Base2d,
        maps: Vec<BankFn>,
        sigma_aug: f64,
    },
}

/// A concrete synthetic target.
#[derive(Debug)]
pub struct Target {
    params: TargetParams,
    dim: usize,
    model: Model,
    queries: AtomicU64,
}

impl Clone for Target {
    fn clone(&self) -> Self {
        Self {
            params: self.params.clone(),
            dim: self.dim,
            model: self.model.clone(),
            queries: AtomicU64::new(self.queries.load(Ordering::Relaxed)),
        }
    }
}

/// Build a target of the given kind and dimension.
pub fn make_target(params: &TargetParams, dim: usize) -> Result<Target> {
    Target::new(params.clone(), dim)
}

impl Target {
    pub fn new(params: TargetParams, dim: usize) -> Result<Self> {
        let model = match params.kind {
            TargetKind::GaussianTridiag => {
                if dim < 1 {
                    return Err(Error::Config("gaussian target needs D >= 1".into()));
                }
                let prec = tridiagonal(dim, params.diag, params.offdiag);
                let chol = prec.cholesky().ok_or_else(|| {
                    Error::Config(format!(
                        "tridiagonal precision (diag {}, offdiag {}) is not positive definite at D={dim}",
                        params.diag, params.offdiag
                    ))
                })?;
                let l = chol.l();
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Model::Gaussian {
                    diag: params.diag,
                    off: params.offdiag,
                    chol: l,
                    log_det,
                }
            }
            kind => {
                if dim < 2 {
                    return Err(Error::Config(format!("{} target needs D >= 2, got {dim}", kind.name())));
                }
                if !(params.sigma_aug.is_finite() && params.sigma_aug > 0.0) {
                    return Err(Error::Config(format!("sigma_aug must be positive, got {}", params.sigma_aug)));
                }
                let base = match kind {
                    TargetKind::Gmm3 => Base2d::mixture(&fixtures::GMM3),
                    TargetKind::Xshape => Base2d::mixture(&fixtures::XSHAPE),
                    TargetKind::Ring => Base2d::ring(fixtures::RING_RADIUS, fixtures::RING_SIGMA),
                    TargetKind::Funnel => Base2d::Funnel { sigma: fixtures::FUNNEL_SIGMA },
                    TargetKind::GaussianTridiag => unreachable!(),
                };
                Model::Lifted {
                    base,
                    maps: FunctionBank::default().take(dim - 2),
                    sigma_aug: params.sigma_aug,
                }
            }
        };
        Ok(Self {
            params,
            dim,
            model,
            queries: AtomicU64::new(0),
        })
    }

    pub fn params(&self) -> &TargetParams {
        &self.params
    }

    pub fn kind(&self) -> TargetKind {
        self.params.kind
    }

    /// Precision matrix of the Gaussian target.
    pub fn precision(&self) -> Option<DMatrix<f64>> {
        match &self.model {
            Model::Gaussian { diag, off, .. } => Some(tridiagonal(self.dim, *diag, *off)),
            Model::Lifted { .. } => None,
        }
    }

    /// Maps h_1..h_N of the lifting chain (empty for the Gaussian).
    pub fn lifting_maps(&self) -> &[BankFn] {
        match &self.model {
            Model::Gaussian { .. } => &[],
            Model::Lifted { maps, .. } => maps,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Contract(format!("point has length {}, target dimension is {}", x.len(), self.dim)));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("point has non-finite coordinate {v}")));
        }
        Ok(())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Gaussian { diag, off, log_det, .. } => {
                let mut quad = 0.0;
                for i in 0..self.dim {
                    quad += diag * x[i] * x[i];
                    if i + 1 < self.dim {
                        quad += 2.0 * off * x[i] * x[i + 1];
                    }
                }
                0.5 * log_det - 0.5 * self.dim as f64 * LN_2PI - 0.5 * quad
            }
            Model::Lifted { base, maps, sigma_aug } => {
                let var = sigma_aug * sigma_aug;
                let n = maps.len() as f64;
                let mut lp = base.log_density(x[0], x[1]) - 0.5 * n * (2.0 * PI * var).ln();
                for (i, h) in maps.iter().enumerate() {
                    let r = x[i + 2] - h.value(x[i + 1]);
                    lp -= r * r / (2.0 * var);
                }
                lp
            }
        }
    }

    /// Score component j, reading coordinates through `get` (only clique members are read).
    fn component(&self, j: usize, get: impl Fn(usize) -> f64) -> f64 {
        let d = self.dim;
        match &self.model {
            Model::Gaussian { diag, off, .. } => {
                let mut s = -diag * get(j);
                if j > 0 {
                    s -= off * get(j - 1);
                }
                if j + 1 < d {
                    s -= off * get(j + 1);
                }
                s
            }
            Model::Lifted { base, maps, sigma_aug } => {
                let var = sigma_aug * sigma_aug;
                // Child term: coordinate c is the parent of coordinate c+1 through map h_{c}.
                let child = |c: usize| -> f64 {
                    if c >= 1 && c + 1 < d {
                        let h = &maps[c - 1];
                        let parent = get(c);
                        h.derivative(parent) * (get(c + 1) - h.value(parent)) / var
                    } else {
                        0.0
                    }
                };
                match j {
                    0 => base.score(get(0), get(1))[0],
                    1 => base.score(get(0), get(1))[1] + child(1),
                    _ => {
                        let h = &maps[j - 2];
                        (h.value(get(j - 1)) - get(j)) / var + child(j)
                    }
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// `n` samples from the stream derived from `seed`.
    pub fn sample_seeded(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = rng::stream(seed, Tag::TargetSamples, 0);
        self.sample(n, &mut s)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.model {
            Model::Gaussian { chol, .. } => {
                // x = L^{-T} z has covariance (L Lᵀ)^{-1}.
                let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = chol
                    .transpose()
                    .solve_upper_triangular(&z)
                    .expect("cholesky factor has a positive diagonal");
                x.iter().copied().collect()
            }
            Model::Lifted { base, maps, sigma_aug } => {
                let mut x = Vec::with_capacity(self.dim);
                let [a, b] = base.sample(rng);
                x.push(a);
                x.push(b);
                for h in maps {
                    let prev = *x.last().unwrap();
                    let eps: f64 = rng.sample(StandardNormal);
                    x.push(h.value(prev) + sigma_aug * eps);
                }
                x
            }
        }
    }

    /// ∇log p(x) without touching the query counter, for evaluation code.
    pub fn score_unmetered(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok((0..self.dim).map(|j| self.component(j, |i| x[i])).collect())
    }

    pub fn reset_query_count(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }
}

impl ScoreOracle for Target {
    fn dim(&self) -> usize {
        self.dim
    }

    fn clique(&self, j: usize) -> Range<usize> {
        path_clique(j, self.dim)
    }

    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok((0..self.dim).map(|j| self.component(j, |i| x[i])).collect())
    }

    fn local_score(&self, j: usize, clique_values: &[f64]) -> Result<f64> {
        if j >= self.dim {
            return Err(Error::Contract(format!("score component {j} out of range for D={}", self.dim)));
        }
        let c = self.clique(j);
        if clique_values.len() != c.len() {
            return Err(Error::Contract(format!(
                "component {j} depends on coordinates {c:?} but {} values were supplied",
                clique_values.len()
            )));
        }
        self.queries.fetch_add(1, Ordering::Relaxed);
        let lo = c.start;
        Ok(self.component(j, |i| {
            debug_assert!(c.contains(&i), "component {j} read coordinate {i} outside its clique");
            clique_values[i - lo]
        }))
    }

    fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

/// Nearest-neighbour window `{j-1, j, j+1} ∩ [0, D)`; coordinate 0 also sees coordinate 1.
pub fn path_clique(j: usize, dim: usize) -> Range<usize> {
    let lo = j.max(1) - 1;
    let hi = (j + 2).min(dim);
    lo..hi.max(lo + 1)
}

pub fn tridiagonal(dim: usize, diag: f64, off: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            diag
        } else if i.abs_diff(j) == 1 {
            off
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(dim: usize, off: f64) -> Target {
        let mut p = TargetParams::new(TargetKind::GaussianTridiag);
        p.offdiag = off;
        make_target(&p, dim).unwrap()
    }

    #[test]
    fn gaussian_precision_is_tridiagonal() {
        let t = gaussian(5, 0.3);
        let l = t.precision().unwrap();
        for i in 0..5 {
            assert_eq!(l[(i, i)], 1.0);
            for j in 0..5 {
                if i.abs_diff(j) == 1 {
                    assert_eq!(l[(i, j)], 0.3);
                } else if i != j {
                    assert_eq!(l[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn non_positive_definite_precision_is_rejected() {
        let mut p = TargetParams::new(TargetKind::GaussianTridiag);
        p.offdiag = 0.9;
        assert!(matches!(make_target(&p, 6), Err(Error::Config(_))));
    }

    #[test]
    fn lifted_targets_need_two_dimensions() {
        assert!(matches!(make_target(&TargetParams::new(TargetKind::Ring), 1), Err(Error::Config(_))));
    }

    #[test]
    fn gaussian_score_at_unit_vector() {
        let t = gaussian(3, 0.3);
        let s = t.score(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s, vec![-1.0, -0.3, 0.0]);
    }

    #[test]
    fn gaussian_log_density_at_mode() {
        let t = gaussian(4, 0.3);
        let lam = t.precision().unwrap();
        let expected = 0.5 * lam.determinant().ln() - 2.0 * LN_2PI;
        assert!((t.log_density(&[0.0; 4]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ring_energy_difference() {
        let t = make_target(&TargetParams::new(TargetKind::Ring), 2).unwrap();
        let at3 = t.log_density(&[3.0, 0.0]).unwrap();
        let at0 = t.log_density(&[0.0, 0.0]).unwrap();
        assert!((at3 - at0 - 9.0 / (2.0 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_noise_follows_the_map() {
        let mut p = TargetParams::new(TargetKind::Funnel);
        p.sigma_aug = 1e-300;
        let t = make_target(&p, 3).unwrap();
        let mut s = rng::stream(1, Tag::Misc, 0);
        for x in t.sample(10, &mut s) {
            assert_eq!(x[2], t.lifting_maps()[0].value(x[1]));
        }
    }

    #[test]
    fn last_coordinate_has_no_child_term() {
        let t = make_target(&TargetParams::new(TargetKind::Gmm3), 4).unwrap();
        let x = [0.3, -0.2, 0.5, 1.1];
        let s = t.score(&x).unwrap();
        let var = 0.25;
        let maps = t.lifting_maps();
        let own = |i: usize| (maps[i - 2].value(x[i - 1]) - x[i]) / var;
        assert!((s[3] - own(3)).abs() < 1e-14);
        let child = maps[1].derivative(x[2]) * (x[3] - maps[1].value(x[2])) / var;
        assert!(child.abs() > 1e-3);
        assert!((s[2] - own(2) - child).abs() < 1e-13);
    }

    #[test]
    fn queries_are_counted_per_call() {
        let t = gaussian(3, 0.3);
        t.score(&[0.0; 3]).unwrap();
        t.local_score(1, &[0.0; 3]).unwrap();
        t.local_score(0, &[0.0; 2]).unwrap();
        assert_eq!(t.query_count(), 3);
    }

    #[test]
    fn clique_mismatch_is_a_contract_violation() {
        let t = gaussian(4, 0.3);
        assert!(matches!(t.local_score(1, &[0.0; 2]), Err(Error::Contract(_))));
        assert!(matches!(t.local_score(9, &[0.0; 2]), Err(Error::Contract(_))));
        assert_eq!(t.query_count(), 0);
    }

    #[test]
    fn bank_cycles_deterministically() {
        let bank = FunctionBank::default();
        assert_eq!(bank.len(), 20);
        let taken = bank.take(23);
        assert_eq!(taken[20], taken[0]);
        assert_eq!(taken[22], taken[2]);
    }

    #[test]
    fn bank_derivatives_match_finite_differences() {
        let h = 1e-6;
        for f in FunctionBank::default().take(20) {
            for x in [-2.1, -0.4, 0.0, 0.9, 2.7] {
                let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
                assert!((fd - f.derivative(x)).abs() < 1e-7, "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        for kind in TargetKind::ALL {
            let t = make_target(&TargetParams::new(kind), 4).unwrap();
            let a = t.sample_seeded(50, 7);
            let b = t.sample_seeded(50, 7);
            let bits = |v: &Vec<Vec<f64>>| v.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn clique_windows() {
        assert_eq!(path_clique(0, 5), 0..2);
        assert_eq!(path_clique(1, 5), 0..3);
        assert_eq!(path_clique(4, 5), 3..5);
        assert_eq!(path_clique(0, 1), 0..1);
        assert_eq!(path_clique(1, 2), 0..2);
    }
}
