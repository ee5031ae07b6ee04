//! Versioned parameter sets for the two-dimensional mixture targets.
//!
//! The mixture targets are only described qualitatively ("unequal weights and
//! mildly correlated covariances", "two anisotropic Gaussians rotated by ±45°"),
//! so the numbers below are fixtures. Bump [`FIXTURE_VERSION`] whenever any of
//! them changes so stored results can be told apart.

pub const FIXTURE_VERSION: u32 = 1;

/// (weight, mean, covariance row-major)
pub type Component = (f64, [f64; 2], [f64; 4]);

pub const GMM3: [Component; 3] = [
    (0.5, [-1.5, -1.0], [0.60, 0.15, 0.15, 0.50]),
    (0.3, [1.5, -0.5], [0.50, -0.12, -0.12, 0.70]),
    (0.2, [0.0, 1.8], [0.40, 0.08, 0.08, 0.35]),
];

/// Major/minor standard deviations of each arm before rotation: 2.0 and 0.4.
pub const XSHAPE: [Component; 2] = [
    (0.5, [0.0, 0.0], [2.08, 1.92, 1.92, 2.08]),
    (0.5, [0.0, 0.0], [2.08, -1.92, -1.92, 2.08]),
];

pub const RING_RADIUS: f64 = 3.0;
pub const RING_SIGMA: f64 = 0.5;
pub const FUNNEL_SIGMA: f64 = 1.2;

pub const DEFAULT_SIGMA_AUG: f64 = 0.5;
pub const DEFAULT_OFFDIAG: f64 = 0.3;
/// Off-diagonal precision value quoted in the detailed experiment settings.
pub const ALT_OFFDIAG: f64 = 0.2;
/// Amplitude of every map in the lifting function bank.
pub const BANK_AMPLITUDE: f64 = 1.5;
