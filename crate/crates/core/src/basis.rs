//! One-dimensional orthonormal feature bases.
//!
//! A [`Basis`] evaluates the K local features φ(x) and their derivatives φ̇(x)
//! and computes the one-dimensional overlap integrals the rest of the crate
//! contracts with: the Gram matrix ∫φφᵀ, the derivative Gram ∫φ̇φ̇ᵀ and the
//! interval overlaps ∫ₐᵇ φφᵀ used for box probabilities.
//!
//! Two families are provided:
//!
//! * Hermite functions ψₖ(x/σ)/√σ, where ψₖ(x) = (2ᵏ k! √π)^{-1/2} Hₖ(x) e^{-x²/2}.
//!   With σ = 1 these are the textbook Hermite functions (φ₀² is the N(0, ½)
//!   density); with σ = √2, φ₀² is the standard normal density.
//! * A real Fourier basis on one period [-P/2, P/2], identically zero outside.
//!
//! All integrals use a fixed Gauss–Legendre rule, so results are bit-reproducible.

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::GaussLegendre;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

pub const DEFAULT_QUADRATURE_NODES: usize = 256;

/// Stretch of the Hermite functions used by experiments unless configured
/// otherwise; with it φ₀² is the standard normal density.
pub const DEFAULT_HERMITE_SCALE: f64 = std::f64::consts::SQRT_2;

/// Tolerance used when checking that the configured rule reproduces orthonormality.
const GRAM_CHECK_TOL: f64 = 1e-8;

/// Extra half-width (in units of σ) added beyond the outermost turning point
/// of the highest Hermite function; the tails past it are below 1e-30.
const HERMITE_TAIL: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisKind {
    HermiteFunction { scale: f64 },
    Fourier { period: f64 },
}

/// Serializable description of a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub k: usize,
    #[serde(flatten)]
    pub kind: BasisKind,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

#[derive(Debug, Clone)]
pub struct Basis {
    k: usize,
    kind: BasisKind,
    rule: GaussLegendre,
}

/// Gram and derivative-Gram matrices of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrices {
    pub gram: DMatrix<f64>,
    pub dgram: DMatrix<f64>,
}

impl Basis {
    pub fn hermite(k: usize) -> Result<Self> {
        Self::hermite_scaled(k, 1.0)
    }

    /// Hermite functions stretched by `scale`; `scale = √2` gives φ₀² = N(0, 1).
    pub fn hermite_scaled(k: usize, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("hermite scale must be positive, got {scale}")));
        }
        Self::from_spec(&BasisSpec {
            k,
            kind: BasisKind::HermiteFunction { scale },
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        })
    }

    pub fn fourier(k: usize, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Config(format!("fourier period must be positive, got {period}")));
        }
        Self::from_spec(&BasisSpec {
            k,
            kind: BasisKind::Fourier { period },
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        })
    }

    pub fn from_spec(spec: &BasisSpec) -> Result<Self> {
        if spec.k == 0 {
            return Err(Error::Config("basis needs K >= 1".into()));
        }
        if spec.quadrature_nodes == 0 {
            return Err(Error::Config("quadrature needs at least one node".into()));
        }
        Ok(Self {
            k: spec.k,
            kind: spec.kind,
            rule: GaussLegendre::new(spec.quadrature_nodes),
        })
    }

    pub fn with_quadrature_nodes(mut self, nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::Config("quadrature needs at least one node".into()));
        }
        self.rule = GaussLegendre::new(nodes);
        Ok(self)
    }

    pub fn spec(&self) -> BasisSpec {
        BasisSpec {
            k: self.k,
            kind: self.kind,
            quadrature_nodes: self.rule.len(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Interval outside of which every feature is zero (or numerically so).
    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            BasisKind::HermiteFunction { scale } => {
                let w = scale * ((2.0 * self.k as f64 + 1.0).sqrt() + HERMITE_TAIL);
                (-w, w)
            }
            BasisKind::Fourier { period } => (-0.5 * period, 0.5 * period),
        }
    }

    pub fn eval_phi(&self, x: f64) -> Result<Vec<f64>> {
        ensure_finite(x, "x")?;
        let mut phi = vec![0.0; self.k];
        self.fill_phi(x, &mut phi);
        Ok(phi)
    }

    pub fn eval_phi_dot(&self, x: f64) -> Result<Vec<f64>> {
        ensure_finite(x, "x")?;
        let mut phi = vec![0.0; self.k];
        let mut dphi = vec![0.0; self.k];
        self.fill_phi_and_dot(x, &mut phi, &mut dphi);
        Ok(dphi)
    }

    /// Writes φ(x) into `phi` (length K). No finiteness check.
    pub fn fill_phi(&self, x: f64, phi: &mut [f64]) {
        debug_assert_eq!(phi.len(), self.k);
        match self.kind {
            BasisKind::HermiteFunction { scale } => {
                let t = x / scale;
                hermite_functions(t, phi);
                let norm = scale.sqrt().recip();
                phi.iter_mut().for_each(|p| *p *= norm);
            }
            BasisKind::Fourier { period } => fourier_values(x, period, phi, None),
        }
    }

    /// Writes φ(x) and φ̇(x). No finiteness check.
    pub fn fill_phi_and_dot(&self, x: f64, phi: &mut [f64], dphi: &mut [f64]) {
        debug_assert_eq!(phi.len(), self.k);
        debug_assert_eq!(dphi.len(), self.k);
        match self.kind {
            BasisKind::HermiteFunction { scale } => {
                let t = x / scale;
                // One extra function is needed for the derivative ladder.
                let mut ext = vec![0.0; self.k + 1];
                hermite_functions(t, &mut ext);
                let norm = scale.sqrt().recip();
                for n in 0..self.k {
                    let down = if n > 0 { (n as f64 / 2.0).sqrt() * ext[n - 1] } else { 0.0 };
                    let up = ((n as f64 + 1.0) / 2.0).sqrt() * ext[n + 1];
                    phi[n] = ext[n] * norm;
                    dphi[n] = (down - up) * norm / scale;
                }
            }
            BasisKind::Fourier { period } => fourier_values(x, period, phi, Some(dphi)),
        }
    }

    pub fn overlap_matrices(&self) -> Result<OverlapMatrices> {
        let (lo, hi) = self.support();
        let k = self.k;
        let mut gram = DMatrix::zeros(k, k);
        let mut dgram = DMatrix::zeros(k, k);
        let mut phi = vec![0.0; k];
        let mut dphi = vec![0.0; k];
        for (x, w) in self.rule.on_interval(lo, hi) {
            self.fill_phi_and_dot(x, &mut phi, &mut dphi);
            for a in 0..k {
                for b in 0..k {
                    gram[(a, b)] += w * phi[a] * phi[b];
                    dgram[(a, b)] += w * dphi[a] * dphi[b];
                }
            }
        }
        let dev = (&gram - DMatrix::<f64>::identity(k, k)).amax();
        if dev > GRAM_CHECK_TOL {
            return Err(Error::Numerical(format!(
                "{}-node Gauss-Legendre rule on [{lo:.3}, {hi:.3}] reproduces the Gram matrix only to {dev:.3e}; \
                 increase the node count",
                self.rule.len()
            )));
        }
        Ok(OverlapMatrices { gram, dgram })
    }

    /// ∫ₐᵇ φ(x)φ(x)ᵀ dx. Infinite endpoints are allowed.
    pub fn interval(&self, a: f64, b: f64) -> Result<DMatrix<f64>> {
        if a.is_nan() || b.is_nan() {
            return Err(Error::Input("interval endpoints must not be NaN".into()));
        }
        if a > b {
            return Err(Error::Input(format!("malformed interval [{a}, {b}]")));
        }
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        let k = self.k;
        let mut out = DMatrix::zeros(k, k);
        if a >= b {
            return Ok(out);
        }
        let mut phi = vec![0.0; k];
        for (x, w) in self.rule.on_interval(a, b) {
            self.fill_phi(x, &mut phi);
            for i in 0..k {
                for j in 0..k {
                    out[(i, j)] += w * phi[i] * phi[j];
                }
            }
        }
        Ok(out)
    }
}

/// Orthonormal Hermite functions ψ₀..ψ_{n-1} at t via the stable three-term recurrence.
fn hermite_functions(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * t * t).exp();
    if out.len() > 1 {
        out[1] = SQRT_2 * t * out[0];
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * t * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// Ordering: [1, cos(ωx), sin(ωx), cos(2ωx), sin(2ωx), …] with ω = 2π/P.
fn fourier_values(x: f64, period: f64, phi: &mut [f64], dphi: Option<&mut [f64]>) {
    let half = 0.5 * period;
    let inside = (-half..=half).contains(&x);
    let c0 = period.sqrt().recip();
    let c = (2.0 / period).sqrt();
    let omega = 2.0 * PI / period;
    let mut dphi = dphi;
    for (n, p) in phi.iter_mut().enumerate() {
        let (v, dv) = if !inside {
            (0.0, 0.0)
        } else if n == 0 {
            (c0, 0.0)
        } else {
            let m = n.div_ceil(2) as f64;
            let arg = m * omega * x;
            if n % 2 == 1 {
                (c * arg.cos(), -c * m * omega * arg.sin())
            } else {
                (c * arg.sin(), c * m * omega * arg.cos())
            }
        };
        *p = v;
        if let Some(d) = dphi.as_deref_mut() {
            d[n] = dv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroth_hermite_function_at_origin() {
        let b = Basis::hermite(1).unwrap();
        let v = b.eval_phi(0.0).unwrap();
        assert!((v[0] - PI.powf(-0.25)).abs() < 1e-15);
        // Cross-check the closed form against its quadrature normalization.
        let rule = GaussLegendre::new(200);
        let norm = rule.integrate(-20.0, 20.0, |x| b.eval_phi(x).unwrap()[0].powi(2));
        assert!((norm - 1.0).abs() < 1e-13);
    }

    #[test]
    fn odd_functions_vanish_at_origin() {
        let b = Basis::hermite(9).unwrap();
        let v = b.eval_phi(0.0).unwrap();
        for k in (1..9).step_by(2) {
            assert_eq!(v[k], 0.0, "psi_{k}(0)");
        }
    }

    #[test]
    fn fourier_constant_mode() {
        let b = Basis::fourier(1, 10.0).unwrap();
        for x in [-4.9, -1.0, 0.0, 3.3] {
            assert!((b.eval_phi(x).unwrap()[0] - 10f64.sqrt().recip()).abs() < 1e-15);
            assert_eq!(b.eval_phi_dot(x).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn derivative_of_even_function_at_zero() {
        let b = Basis::hermite(3).unwrap();
        assert_eq!(b.eval_phi_dot(0.0).unwrap()[0], 0.0);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let b = Basis::hermite(2).unwrap();
        let (x, h) = (0.7, 1e-5);
        let fd = (b.eval_phi(x + h).unwrap()[0] - b.eval_phi(x - h).unwrap()[0]) / (2.0 * h);
        let an = b.eval_phi_dot(x).unwrap()[0];
        assert!((fd - an).abs() <= 1e-8, "fd={fd} analytic={an}");
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let b = Basis::hermite(2).unwrap();
        assert!(matches!(b.eval_phi(f64::NAN), Err(Error::Input(_))));
        assert!(matches!(b.eval_phi_dot(f64::INFINITY), Err(Error::Input(_))));
    }

    #[test]
    fn gram_is_identity_and_dgram_matches_ladder() {
        let b = Basis::hermite(4).unwrap();
        let o = b.overlap_matrices().unwrap();
        assert!((&o.gram - DMatrix::<f64>::identity(4, 4)).amax() < 1e-10);
        assert!((o.dgram[(0, 0)] - 0.5).abs() < 1e-12);
        // Independent check of dgram[0,0]: ∫ (x ψ₀)² dx by quadrature.
        let rule = GaussLegendre::new(200);
        let q = rule.integrate(-20.0, 20.0, |x| (x * PI.powf(-0.25) * (-0.5 * x * x).exp()).powi(2));
        assert!((q - 0.5).abs() < 1e-13);
    }

    #[test]
    fn half_line_interval_holds_half_the_mass() {
        let b = Basis::hermite(1).unwrap();
        let m = b.interval(f64::NEG_INFINITY, 0.0).unwrap();
        assert!((m[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_nodes_is_a_numerical_error() {
        let b = Basis::hermite(8).unwrap().with_quadrature_nodes(4).unwrap();
        assert!(matches!(b.overlap_matrices(), Err(Error::Numerical(_))));
    }

    #[test]
    fn malformed_interval_is_rejected() {
        let b = Basis::hermite(2).unwrap();
        assert!(matches!(b.interval(1.0, -1.0), Err(Error::Input(_))));
    }

    #[test]
    fn scaled_ground_function_squares_to_standard_normal() {
        let b = Basis::hermite_scaled(1, SQRT_2).unwrap();
        for x in [-1.3, 0.0, 0.4, 2.2] {
            let p = b.eval_phi(x).unwrap()[0].powi(2);
            let n = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            assert!((p - n).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_k_is_a_config_error() {
        assert!(matches!(Basis::hermite(0), Err(Error::Config(_))));
    }
}
