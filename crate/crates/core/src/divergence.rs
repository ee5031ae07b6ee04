//! Monte-Carlo divergences between a target and a Born model.
//!
//! Every estimator draws its points from the target, in fixed-size chunks with
//! one RNG stream per chunk, and reduces them in chunk order. Expectations
//! under the model are importance-reweighted by q/p.

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianRep;
use crate::linalg::sorted_eigen;
use crate::mpo::{BornModel, BornScore, LogDensity};
use crate::rng::{self, Tag};
use crate::spectral::GroundSpace;
use crate::targets::{Target, TargetKind};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_KL_SAMPLES: usize = 10_000;

/// Importance weights q/p above this raise the heavy-tail flag.
pub const HEAVY_TAIL_WEIGHT: f64 = 1e6;

const SAMPLE_CHUNK: usize = 1024;

/// The model side of a divergence: a log density and its score.
pub trait DensityModel: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> Result<LogDensity>;
    fn score(&self, x: &[f64]) -> Result<BornScore>;
}

impl DensityModel for BornModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> Result<LogDensity> {
        self.log_eval(x)
    }

    fn score(&self, x: &[f64]) -> Result<BornScore> {
        BornModel::score(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    /// Points where log q hit the floor.
    pub clamps: usize,
    /// Points where the model score was unreliable because q hit the floor.
    pub unreliable_scores: usize,
    pub seed: u64,
    /// Some importance weight q/p exceeded 1e6.
    pub heavy_tail: bool,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    log_p: f64,
    log_q: f64,
    clamped: bool,
    /// ‖∇log q − ∇log p‖², when requested.
    score_gap: f64,
    unreliable: bool,
}

fn draw(target: &Target, model: &dyn DensityModel, n: usize, seed: u64, with_scores: bool) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if model.dim() != crate::targets::ScoreOracle::dim(target) {
        return Err(Error::Contract(format!(
            "model dimension {} differs from target dimension {}",
            model.dim(),
            crate::targets::ScoreOracle::dim(target)
        )));
    }
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let per_chunk: Vec<Result<Vec<Sample>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            let mut stream = rng::stream(seed, Tag::TargetSamples, c as u64);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let x = target.sample_one(&mut stream);
                let log_p = target.log_density(&x)?;
                let lq = model.log_density(&x)?;
                let (score_gap, unreliable) = if with_scores {
                    let sq = model.score(&x)?;
                    let sp = target.score_unmetered(&x)?;
                    let gap = sq.score.iter().zip(&sp).map(|(a, b)| (a - b) * (a - b)).sum();
                    (gap, sq.unreliable)
                } else {
                    (0.0, false)
                };
                out.push(Sample {
                    log_p,
                    log_q: lq.value,
                    clamped: lq.clamped,
                    score_gap,
                    unreliable,
                });
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(n);
    for c in per_chunk {
        all.extend(c?);
    }
    Ok(all)
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn estimate(values: &[f64], samples: &[Sample], seed: u64, heavy_tail: bool) -> DivergenceEstimate {
    let (value, stderr) = mean_stderr(values);
    DivergenceEstimate {
        value,
        stderr,
        n: values.len(),
        clamps: samples.iter().filter(|s| s.clamped).count(),
        unreliable_scores: samples.iter().filter(|s| s.unreliable).count(),
        seed,
        heavy_tail,
    }
}

/// D_KL(p‖q) ≈ (1/n) Σ log p(x_i) − log q(x_i), x_i ~ p.
pub fn forward_kl(target: &Target, model: &dyn DensityModel, n: usize, seed: u64) -> Result<DivergenceEstimate> {
    let samples = draw(target, model, n, seed, false)?;
    let values: Vec<f64> = samples.iter().map(|s| s.log_p - s.log_q).collect();
    Ok(estimate(&values, &samples, seed, false))
}

fn weights(samples: &[Sample]) -> (Vec<f64>, bool) {
    let w: Vec<f64> = samples
        .iter()
        .map(|s| if s.clamped { 0.0 } else { (s.log_q - s.log_p).exp() })
        .collect();
    let heavy = w.iter().any(|&v| v > HEAVY_TAIL_WEIGHT || !v.is_finite());
    (w, heavy)
}

/// D_F(q‖p) = E_q ‖∇log q − ∇log p‖², reweighted from target samples.
pub fn fisher_divergence(target: &Target, model: &dyn DensityModel, n: usize, seed: u64) -> Result<DivergenceEstimate> {
    let samples = draw(target, model, n, seed, true)?;
    let (w, heavy) = weights(&samples);
    let values: Vec<f64> = samples.iter().zip(&w).map(|(s, w)| w * s.score_gap).collect();
    Ok(estimate(&values, &samples, seed, heavy))
}

/// D_KL(q‖p) = E_q[log q − log p], reweighted from target samples.
pub fn reverse_kl(target: &Target, model: &dyn DensityModel, n: usize, seed: u64) -> Result<DivergenceEstimate> {
    let samples = draw(target, model, n, seed, false)?;
    let (w, heavy) = weights(&samples);
    let values: Vec<f64> = samples.iter().zip(&w).map(|(s, w)| w * (s.log_q - s.log_p)).collect();
    Ok(estimate(&values, &samples, seed, heavy))
}

/// tr(ρH) for ρ = UUᵀ/r, computed as tr(UᵀHU)/r.
pub fn trace_energy(gs: &GroundSpace, h: &HamiltonianRep) -> Result<f64> {
    if gs.size() != h.size() {
        return Err(Error::Contract(format!("ground space of size {} for a Hamiltonian of size {}", gs.size(), h.size())));
    }
    let mut total = 0.0;
    for c in 0..gs.r {
        let col = gs.u.column(c);
        let hu = h.apply(col.as_slice())?;
        total += col.iter().zip(&hu).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total / gs.r as f64)
}

/// tr(ρH) for a dense ρ.
pub fn trace_energy_dense(rho: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    if rho.shape() != h.shape() {
        return Err(Error::Contract(format!("ρ is {:?} but H is {:?}", rho.shape(), h.shape())));
    }
    Ok(rho.component_mul(&h.transpose()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsiReport {
    /// D_KL(q‖p).
    pub kl: DivergenceEstimate,
    /// D_F(q‖p).
    pub fisher: DivergenceEstimate,
    /// LSI constant λ_min(Λ).
    pub c: f64,
    /// D_F/(2c).
    pub bound: f64,
    /// Standard error of the paired difference D_F/(2c) − D_KL.
    pub combined_stderr: f64,
    pub satisfied: bool,
}

/// Checks D_KL(q‖p) ≤ D_F(q‖p)/(2c) + 3σ for a Gaussian target.
pub fn lsi_check(target: &Target, model: &dyn DensityModel, n: usize, seed: u64) -> Result<LsiReport> {
    if target.kind() != TargetKind::GaussianTridiag {
        return Err(Error::Config("the LSI check needs a Gaussian target".into()));
    }
    let prec = target.precision().expect("Gaussian targets expose their precision");
    let (vals, _) = sorted_eigen(&prec);
    let c = vals[0];
    let samples = draw(target, model, n, seed, true)?;
    let (w, heavy) = weights(&samples);
    let kl_vals: Vec<f64> = samples.iter().zip(&w).map(|(s, w)| w * (s.log_q - s.log_p)).collect();
    let f_vals: Vec<f64> = samples.iter().zip(&w).map(|(s, w)| w * s.score_gap).collect();
    let diff: Vec<f64> = kl_vals.iter().zip(&f_vals).map(|(k, f)| f / (2.0 * c) - k).collect();
    let kl = estimate(&kl_vals, &samples, seed, heavy);
    let fisher = estimate(&f_vals, &samples, seed, heavy);
    let (_, combined_stderr) = mean_stderr(&diff);
    let bound = fisher.value / (2.0 * c);
    Ok(LsiReport {
        kl,
        fisher,
        c,
        bound,
        combined_stderr,
        satisfied: kl.value <= bound + 3.0 * combined_stderr,
    })
}
