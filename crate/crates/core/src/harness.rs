//! Experiment configuration, seeded runs and their on-disk artifacts.
//!
//! Output files and their fixed column order:
//!
//! * `results.csv`: [`RESULT_COLUMNS`], one row per (D, estimator, B, seed).
//! * `gaps-<target>.csv`: [`GAP_COLUMNS`], one row per reported eigenvalue.
//! * `scaling.json`: [`ScalingReport`].
//! * `hardness.json`: a list of [`GapReport`]s.
//!
//! Every row or document carries the config hash, the seed and [`VERSION`].
//! The `wall_time_s` column is the only one that differs between reruns.

use crate::basis::{Basis, BasisKind, BasisSpec, DEFAULT_HERMITE_SCALE, DEFAULT_QUADRATURE_NODES};
use crate::divergence::{forward_kl, trace_energy, DEFAULT_KL_SAMPLES};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    estimate_h_global, estimate_h_local, exact_h_quadrature, EstimatorKind, HamiltonianRep, KineticMode, SamplingPlan,
    DEFAULT_BOX_WIDTH, DEFAULT_QUADRATURE_NODES_PER_DIM,
};
use crate::hardness::{verify_gap, BumpKind, Formula, GapReport, HardDensity};
use crate::mpo::{density_from_ground, BornModel, DEFAULT_ERR, DEFAULT_MAX_BOND};
use crate::persist::{atomic_write, save_hamiltonian, Provenance, VERSION};
use crate::spectral::{ground_space, spectral_report, GroundSpace, SpectralReport, DEFAULT_REPORT_EIGS};
use crate::targets::{make_target, ScoreOracle, TargetKind, TargetParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

/// Environment variable holding the worker count for sweeps.
pub const WORKERS_ENV: &str = "MPOBM_WORKERS";

pub const DEFAULT_SEED: u64 = 43;

pub const DEFAULT_KL_THRESHOLD: f64 = 0.5;

/// The budget grid used for required-budget scaling runs.
pub const SCALING_BUDGETS: [u64; 17] = [
    1, 5, 10, 15, 20, 50, 75, 100, 150, 200, 500, 1000, 2000, 4000, 6000, 8000, 10000,
];

pub const RESULT_COLUMNS: [&str; 20] = [
    "run_id",
    "config_hash",
    "version",
    "target",
    "dim",
    "k",
    "r",
    "estimator",
    "budget",
    "seed",
    "kl",
    "kl_stderr",
    "max_bond",
    "bonds",
    "cap_hit",
    "mpo_rel_error",
    "trace_energy",
    "ground_energy",
    "queries",
    "wall_time_s",
];

pub const GAP_COLUMNS: [&str; 8] = [
    "eig_index",
    "lambda",
    "rel_gap",
    "ground_gap",
    "target",
    "config_hash",
    "seed",
    "version",
];

fn default_dims() -> Vec<usize> {
    vec![5]
}
fn default_k() -> usize {
    4
}
fn default_r() -> usize {
    2
}
fn default_basis() -> BasisKind {
    BasisKind::HermiteFunction {
        scale: DEFAULT_HERMITE_SCALE,
    }
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Local]
}
fn default_budgets() -> Vec<u64> {
    vec![5000]
}
fn default_box_width() -> f64 {
    DEFAULT_BOX_WIDTH
}
fn default_err() -> f64 {
    DEFAULT_ERR
}
fn default_max_bond() -> usize {
    DEFAULT_MAX_BOND
}
fn default_kl_samples() -> usize {
    DEFAULT_KL_SAMPLES
}
fn default_seeds() -> Vec<u64> {
    vec![DEFAULT_SEED]
}
fn default_threshold() -> f64 {
    DEFAULT_KL_THRESHOLD
}
fn default_n_eigs() -> usize {
    DEFAULT_REPORT_EIGS
}
fn default_quadrature_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES_PER_DIM
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// JSON schema of an experiment. Every key except `target` has a default.
///
/// ```json
/// {
///   "target": { "kind": "gaussian-tridiag" },
///   "dims": [5], "k": 4, "r": 2,
///   "basis": { "kind": "hermite-function", "scale": 1.4142135623730951 },
///   "estimators": ["local"], "budgets": [5000], "box_width": 10.0,
///   "kinetic": "paired", "err": 1e-6, "max_bond": 256,
///   "kl_samples": 10000, "seeds": [43], "kl_threshold": 0.5,
///   "n_eigs": 100, "quadrature_nodes": 64, "out": "out"
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetParams,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_basis")]
    pub basis: BasisKind,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<u64>,
    /// Side length L of the proposal box [−L/2, L/2]^D.
    #[serde(default = "default_box_width")]
    pub box_width: f64,
    #[serde(default)]
    pub kinetic: KineticMode,
    #[serde(default = "default_err")]
    pub err: f64,
    #[serde(default = "default_max_bond")]
    pub max_bond: usize,
    #[serde(default = "default_kl_samples")]
    pub kl_samples: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_threshold")]
    pub kl_threshold: f64,
    #[serde(default = "default_n_eigs")]
    pub n_eigs: usize,
    /// Gauss-Legendre nodes per dimension for the quadrature oracle.
    #[serde(default = "default_quadrature_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn new(kind: TargetKind) -> Self {
        Self {
            target: TargetParams::new(kind),
            dims: default_dims(),
            k: default_k(),
            r: default_r(),
            basis: default_basis(),
            estimators: default_estimators(),
            budgets: default_budgets(),
            box_width: default_box_width(),
            kinetic: KineticMode::default(),
            err: default_err(),
            max_bond: default_max_bond(),
            kl_samples: default_kl_samples(),
            seeds: default_seeds(),
            kl_threshold: default_threshold(),
            n_eigs: default_n_eigs(),
            quadrature_nodes: default_quadrature_nodes(),
            out: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |len: usize, what: &str| {
            if len == 0 {
                Err(Error::Config(format!("{what} must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty(self.dims.len(), "dims")?;
        nonempty(self.estimators.len(), "estimators")?;
        nonempty(self.budgets.len(), "budgets")?;
        nonempty(self.seeds.len(), "seeds")?;
        if self.dims.contains(&0) {
            return Err(Error::Config("dimensions must be at least 1".into()));
        }
        if self.budgets.contains(&0) {
            return Err(Error::Config("sample budget B must be positive".into()));
        }
        if self.k == 0 || self.r == 0 {
            return Err(Error::Config("K and r must be positive".into()));
        }
        if !(self.box_width.is_finite() && self.box_width > 0.0) {
            return Err(Error::Config(format!("box width must be positive, got {}", self.box_width)));
        }
        if !(self.err.is_finite() && self.err >= 0.0) || self.max_bond == 0 {
            return Err(Error::Config("err must be non-negative and max_bond positive".into()));
        }
        if self.kl_samples == 0 {
            return Err(Error::Config("kl_samples must be positive".into()));
        }
        if !self.kl_threshold.is_finite() {
            return Err(Error::Config("kl_threshold must be finite".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Basis> {
        Basis::from_spec(&BasisSpec {
            k: self.k,
            kind: self.basis,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        })
    }

    /// SHA-256 of the canonical JSON with `out` cleared, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }

    pub fn plan(&self, budget: u64, seed: u64) -> SamplingPlan {
        let mut plan = SamplingPlan::new(budget, seed);
        plan.box_width = self.box_width;
        plan.kinetic = self.kinetic;
        plan
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub config_hash: String,
    pub version: String,
    pub target: String,
    pub dim: usize,
    pub k: usize,
    pub r: usize,
    pub estimator: EstimatorKind,
    pub budget: u64,
    pub seed: u64,
    pub kl: f64,
    pub kl_stderr: f64,
    pub max_bond: usize,
    pub bonds: Vec<usize>,
    pub cap_hit: bool,
    pub mpo_rel_error: f64,
    pub trace_energy: f64,
    /// Smallest eigenvalue of the estimated Hamiltonian.
    pub ground_energy: f64,
    pub queries: u64,
    pub wall_time_s: f64,
}

/// Shortest round-trip representation, scientific for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        let bonds: Vec<String> = self.bonds.iter().map(|b| b.to_string()).collect();
        [
            self.run_id.clone(),
            self.config_hash.clone(),
            self.version.clone(),
            self.target.clone(),
            self.dim.to_string(),
            self.k.to_string(),
            self.r.to_string(),
            self.estimator.name().to_string(),
            self.budget.to_string(),
            self.seed.to_string(),
            num(self.kl),
            num(self.kl_stderr),
            self.max_bond.to_string(),
            bonds.join(";"),
            self.cap_hit.to_string(),
            num(self.mpo_rel_error),
            num(self.trace_energy),
            num(self.ground_energy),
            self.queries.to_string(),
            format!("{:.3}", self.wall_time_s),
        ]
        .join(",")
    }

    /// The CSV line without the wall-time column.
    pub fn numeric_fingerprint(&self) -> String {
        let line = self.csv_line();
        line[..line.rfind(',').expect("row has columns")].to_string()
    }
}

/// Everything a single fit produces.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub row: ResultRow,
    pub hamiltonian: HamiltonianRep,
    pub ground: GroundSpace,
    pub model: BornModel,
}

/// One cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub dim: usize,
    pub estimator: EstimatorKind,
    pub budget: u64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &dim in &self.dims {
            for &estimator in &self.estimators {
                for &budget in &self.budgets {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            dim,
                            estimator,
                            budget,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn estimate_hamiltonian(cfg: &ExperimentConfig, cell: Cell) -> Result<(HamiltonianRep, u64)> {
    let basis = cfg.basis()?;
    let target = make_target(&cfg.target, cell.dim)?;
    let before = target.query_count();
    let plan = cfg.plan(cell.budget, cell.seed);
    let h = match cell.estimator {
        EstimatorKind::Global => HamiltonianRep::Dense(estimate_h_global(&basis, &target, &plan)?),
        EstimatorKind::Local => HamiltonianRep::Local(estimate_h_local(&basis, &target, &plan)?),
        EstimatorKind::Quadrature => {
            HamiltonianRep::Dense(exact_h_quadrature(&basis, &target, cfg.box_width, cfg.quadrature_nodes)?)
        }
    };
    Ok((h, target.query_count() - before))
}

/// target → H → ground space → density → MPO → forward KL, for one cell.
pub fn run_fit(cfg: &ExperimentConfig, cell: Cell) -> Result<FitOutcome> {
    let ctx = format!(
        "fit target={} D={} estimator={} B={} seed={}",
        cfg.target.kind.name(),
        cell.dim,
        cell.estimator.name(),
        cell.budget,
        cell.seed
    );
    fit_inner(cfg, cell).map_err(|e| e.context(ctx))
}

fn fit_inner(cfg: &ExperimentConfig, cell: Cell) -> Result<FitOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let basis = cfg.basis()?;
    let target = make_target(&cfg.target, cell.dim)?;
    let (h, queries) = estimate_hamiltonian(cfg, cell)?;
    let ground = ground_space(&h, cfg.r)?;
    let energy = trace_energy(&ground, &h)?;
    let model = density_from_ground(&ground, &basis, cell.dim)?.to_mpo(cfg.err, cfg.max_bond)?;
    let kl = forward_kl(&target, &model, cfg.kl_samples, cell.seed)?;
    let report = model
        .compression
        .clone()
        .ok_or_else(|| Error::Contract("compressed model without a report".into()))?;
    let hash = cfg.hash();
    let row = ResultRow {
        run_id: format!(
            "{}-{}-D{}-{}-B{}-s{}",
            &hash[..8],
            cfg.target.kind.name(),
            cell.dim,
            cell.estimator.name(),
            cell.budget,
            cell.seed
        ),
        config_hash: hash,
        version: VERSION.to_string(),
        target: cfg.target.kind.name().to_string(),
        dim: cell.dim,
        k: cfg.k,
        r: cfg.r,
        estimator: cell.estimator,
        budget: cell.budget,
        seed: cell.seed,
        kl: kl.value,
        kl_stderr: kl.stderr,
        max_bond: report.achieved_max_bond(),
        bonds: report.bonds.clone(),
        cap_hit: report.cap_hit,
        mpo_rel_error: report.relative_error(),
        trace_energy: energy,
        ground_energy: ground.eigenvalues[0],
        queries,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(FitOutcome {
        row,
        hamiltonian: h,
        ground,
        model,
    })
}

/// Worker count from [`WORKERS_ENV`], defaulting to the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a pool of {workers} workers: {e}")))
}

/// Runs every cell on `workers` threads and appends the rows, in cell order,
/// to `<out>/results.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let cells = cfg.cells();
    let rows: Vec<ResultRow> = pool(workers)?.install(|| {
        cells
            .par_iter()
            .map(|&cell| run_fit(cfg, cell).map(|o| o.row))
            .collect::<Result<Vec<_>>>()
    })?;
    append_results(&cfg.out.join("results.csv"), &rows)?;
    Ok(rows)
}

static CSV_LOCK: Mutex<()> = Mutex::new(());

/// Appends rows to a results CSV, writing the header for a new file. The file
/// is rewritten through [`atomic_write`], so readers never see a partial row.
pub fn append_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let _guard = CSV_LOCK.lock().unwrap_or_else(|p| p.into_inner());
    let header = RESULT_COLUMNS.join(",");
    let mut text = match std::fs::read_to_string(path) {
        Ok(existing) => {
            if existing.lines().next() != Some(header.as_str()) {
                return Err(Error::Input(format!("{} has a different header", path.display())));
            }
            existing
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => format!("{header}\n"),
        Err(e) => return Err(e.into()),
    };
    for row in rows {
        text.push_str(&row.csv_line());
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut text = RESULT_COLUMNS.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.csv_line());
        text.push('\n');
    }
    text
}

#[derive(Debug, Clone)]
pub struct GapOutput {
    pub target: TargetKind,
    pub report: SpectralReport,
    pub csv: String,
    pub path: PathBuf,
}

/// Spectral report of the estimated Hamiltonian for the config's first
/// dimension, estimator, budget and seed, written to `<out>/gaps-<target>.csv`.
pub fn run_gaps(cfg: &ExperimentConfig) -> Result<GapOutput> {
    cfg.validate()?;
    let cell = Cell {
        dim: cfg.dims[0],
        estimator: cfg.estimators[0],
        budget: cfg.budgets[0],
        seed: cfg.seeds[0],
    };
    let (h, _) = estimate_hamiltonian(cfg, cell)?;
    let report = spectral_report(&h.to_dense()?, cfg.n_eigs, cfg.r);
    let hash = cfg.hash();
    let name = cfg.target.kind.name();
    let mut csv = GAP_COLUMNS.join(",");
    csv.push('\n');
    for row in report.rows() {
        let gap = row.rel_gap.map(num).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.eig_index,
            num(row.lambda),
            gap, row.ground_gap, name, hash, cell.seed, VERSION
        );
    }
    let path = cfg.out.join(format!("gaps-{name}.csv"));
    atomic_write(&path, csv.as_bytes())?;
    Ok(GapOutput {
        target: cfg.target.kind,
        report,
        csv,
        path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    /// B = a·e^{bD}
    Exponential,
    /// B = a·D^b
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawFit {
    pub law: Law,
    pub a: f64,
    pub b: f64,
    /// Coefficient of determination of the log-scale regression.
    pub r2: f64,
    pub residuals: Vec<f64>,
    pub points: usize,
}

/// Least-squares fit of log B against D (exponential) or log D (power).
pub fn fit_law(law: Law, points: &[(usize, u64)]) -> Result<LawFit> {
    if points.len() < 2 {
        return Err(Error::Input(format!("a fit needs at least 2 points, got {}", points.len())));
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|&(d, _)| match law {
            Law::Exponential => d as f64,
            Law::Power => (d as f64).ln(),
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|&(_, b)| (b as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("a fit needs at least two distinct dimensions".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LawFit {
        law,
        a: intercept.exp(),
        b: slope,
        r2,
        residuals,
        points: points.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub estimator: EstimatorKind,
    pub dim: usize,
    /// Smallest budget whose mean KL over seeds is within the threshold.
    pub required_budget: Option<u64>,
    /// (B, mean KL) for every budget evaluated, ascending.
    pub mean_kl: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub estimator: EstimatorKind,
    pub fit: Option<LawFit>,
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub budgets: Vec<u64>,
    pub points: Vec<ScalingPoint>,
    pub fits: Vec<ScalingFit>,
}

impl ScalingReport {
    pub fn required(&self, estimator: EstimatorKind, dim: usize) -> Option<u64> {
        self.points
            .iter()
            .find(|p| p.estimator == estimator && p.dim == dim)
            .and_then(|p| p.required_budget)
    }

    pub fn fit(&self, estimator: EstimatorKind) -> Option<&LawFit> {
        self.fits.iter().find(|f| f.estimator == estimator).and_then(|f| f.fit.as_ref())
    }
}

/// The law fitted to required budgets: exponential for global, power for local.
pub fn law_for(estimator: EstimatorKind) -> Law {
    match estimator {
        EstimatorKind::Local => Law::Power,
        _ => Law::Exponential,
    }
}

/// Fits the chosen law to the reached points, or explains why not.
pub fn fit_reached(estimator: EstimatorKind, points: &[ScalingPoint]) -> ScalingFit {
    let reached: Vec<(usize, u64)> = points
        .iter()
        .filter(|p| p.estimator == estimator)
        .filter_map(|p| p.required_budget.map(|b| (p.dim, b)))
        .collect();
    if reached.len() < 2 {
        return ScalingFit {
            estimator,
            fit: None,
            notice: Some(format!(
                "fit skipped: {} reached point(s), at least 2 are needed",
                reached.len()
            )),
        };
    }
    match fit_law(law_for(estimator), &reached) {
        Ok(fit) => ScalingFit {
            estimator,
            fit: Some(fit),
            notice: None,
        },
        Err(e) => ScalingFit {
            estimator,
            fit: None,
            notice: Some(format!("fit skipped: {e}")),
        },
    }
}

/// For each estimator and dimension, walks the budget grid upwards until the
/// mean forward KL over seeds reaches the threshold. Writes `<out>/scaling.json`.
pub fn run_scaling(cfg: &ExperimentConfig, workers: usize) -> Result<ScalingReport> {
    cfg.validate()?;
    let mut budgets = cfg.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    let lanes: Vec<(EstimatorKind, usize)> = cfg
        .estimators
        .iter()
        .flat_map(|&e| cfg.dims.iter().map(move |&d| (e, d)))
        .collect();
    let points: Vec<ScalingPoint> = pool(workers)?.install(|| {
        lanes
            .par_iter()
            .map(|&(estimator, dim)| {
                let mut mean_kl = Vec::new();
                let mut required_budget = None;
                for &budget in &budgets {
                    let mut sum = 0.0;
                    for &seed in &cfg.seeds {
                        let cell = Cell {
                            dim,
                            estimator,
                            budget,
                            seed,
                        };
                        sum += run_fit(cfg, cell)?.row.kl;
                    }
                    let mean = sum / cfg.seeds.len() as f64;
                    mean_kl.push((budget, mean));
                    if mean <= cfg.kl_threshold {
                        required_budget = Some(budget);
                        break;
                    }
                }
                Ok(ScalingPoint {
                    estimator,
                    dim,
                    required_budget,
                    mean_kl,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let fits = cfg.estimators.iter().map(|&e| fit_reached(e, &points)).collect();
    let report = ScalingReport {
        config_hash: cfg.hash(),
        version: VERSION.to_string(),
        seeds: cfg.seeds.clone(),
        threshold: cfg.kl_threshold,
        budgets,
        points,
        fits,
    };
    atomic_write(&cfg.out.join("scaling.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardnessRun {
    pub version: String,
    pub bump: BumpKind,
    pub samples: usize,
    pub seed: u64,
    pub all_correct: bool,
    pub reports: Vec<GapReport>,
}

/// Verifies the probability gap for each formula and writes `<out>/hardness.json`.
pub fn run_hardness(formulas: &[Formula], bump: BumpKind, samples: usize, seed: u64, out: &Path) -> Result<HardnessRun> {
    let reports = formulas
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let hd = HardDensity::new(f.clone(), bump);
            verify_gap(&hd, samples, seed.wrapping_add(i as u64)).map_err(|e| e.context(format!("formula {i}: {f}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let run = HardnessRun {
        version: VERSION.to_string(),
        bump,
        samples,
        seed,
        all_correct: reports.iter().all(GapReport::decision_correct),
        reports,
    };
    atomic_write(&out.join("hardness.json"), serde_json::to_string_pretty(&run)?.as_bytes())?;
    Ok(run)
}

/// Computes the quadrature Hamiltonian for each configured dimension and
/// stores it as `<out>/oracle-D<d>.{bin,json}`.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let basis = cfg.basis()?;
    let hash = cfg.hash();
    cfg.dims
        .iter()
        .map(|&dim| {
            let target = make_target(&cfg.target, dim)?;
            let h = exact_h_quadrature(&basis, &target, cfg.box_width, cfg.quadrature_nodes)?;
            let stem = cfg.out.join(format!("oracle-D{dim}"));
            save_hamiltonian(&HamiltonianRep::Dense(h), &stem, Some(Provenance::new(hash.clone(), 0)))?;
            Ok(stem)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(TargetKind::GaussianTridiag);
        cfg.dims = vec![2];
        cfg.k = 2;
        cfg.r = 1;
        cfg.budgets = vec![200];
        cfg.kl_samples = 500;
        cfg
    }

    #[test]
    fn config_defaults_from_minimal_json() {
        let cfg = ExperimentConfig::from_json(r#"{"target": {"kind": "ring"}}"#).unwrap();
        assert_eq!(cfg.seeds, vec![43]);
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.target.kind, TargetKind::Ring);
    }

    #[test]
    fn unknown_keys_and_empty_lists_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"target": {"kind": "ring"}, "bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"target": {"kind": "ring"}, "seeds": []}"#).is_err());
    }

    #[test]
    fn zero_budget_is_a_config_error() {
        let mut cfg = small();
        cfg.budgets = vec![0];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = small();
        let mut b = small();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.k = 3;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn fit_row_accounts_queries() {
        let cfg = small();
        for estimator in [EstimatorKind::Global, EstimatorKind::Local] {
            let cell = Cell {
                dim: 2,
                estimator,
                budget: 200,
                seed: 43,
            };
            let out = run_fit(&cfg, cell).unwrap();
            assert!(out.row.kl.is_finite());
            assert!(out.row.queries <= 200);
            assert_eq!(out.row.seed, 43);
        }
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let pts: Vec<(usize, u64)> = (2..=6).map(|d| (d, 3 * (d as u64).pow(3))).collect();
        let fit = fit_law(Law::Power, &pts).unwrap();
        assert!((fit.b - 3.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.a - 3.0).abs() < 1e-6);
        assert!((fit.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn no_reached_points_means_no_fit() {
        let points: Vec<ScalingPoint> = (2..=4)
            .map(|dim| ScalingPoint {
                estimator: EstimatorKind::Global,
                dim,
                required_budget: None,
                mean_kl: vec![(10000, 3.0)],
            })
            .collect();
        let f = fit_reached(EstimatorKind::Global, &points);
        assert!(f.fit.is_none());
        assert!(f.notice.unwrap().contains("0 reached"));
    }

    #[test]
    fn append_keeps_a_single_header() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let cell = Cell {
            dim: 2,
            estimator: EstimatorKind::Local,
            budget: 200,
            seed: 43,
        };
        let row = run_fit(&cfg, cell).unwrap().row;
        let path = dir.path().join("results.csv");
        append_results(&path, std::slice::from_ref(&row)).unwrap();
        append_results(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().filter(|l| l.starts_with("run_id")).count(), 1);
    }
}
