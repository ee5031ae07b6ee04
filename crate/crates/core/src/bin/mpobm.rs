use clap::{Args, Parser, Subcommand};
use mpobm::basis::BasisKind;
use mpobm::hamiltonian::{EstimatorKind, KineticMode};
use mpobm::harness::{self, ExperimentConfig, SCALING_BUDGETS};
use mpobm::hardness::{self, BumpKind};
use mpobm::persist::{save_hamiltonian, save_mpo, Provenance};
use mpobm::{Error, Result, TargetKind, TargetParams};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mpobm", version, about = "Score-based variational inference with MPO Born machines")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit one model (first entry of every list) and save H, the MPO and a results row.
    Fit(Common),
    /// Fit every (D, estimator, B, seed) cell and append to results.csv.
    Sweep(Common),
    /// Relative eigengaps of the estimated Hamiltonian; `--target all` runs every target.
    Gaps(Common),
    /// Smallest budget reaching the KL threshold per D, with fitted growth laws.
    Scaling(Common),
    /// Probability-gap verification of the SAT embedding.
    Hardness(HardnessArgs),
    /// Dump quadrature Hamiltonians for small D.
    Oracle(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// hermite, hermite:<scale> or fourier:<period>
    #[arg(long)]
    basis: Option<String>,
    #[arg(short = 'K')]
    k: Option<usize>,
    #[arg(short = 'r')]
    r: Option<usize>,
    /// global, local or quadrature (comma-separated for several)
    #[arg(long, value_delimiter = ',')]
    estimator: Option<Vec<String>>,
    /// Sample budgets; `grid` selects the scaling grid.
    #[arg(long, value_delimiter = ',')]
    budget: Option<Vec<String>>,
    /// Half-width of the proposal box.
    #[arg(long)]
    box_halfwidth: Option<f64>,
    /// exact or paired
    #[arg(long)]
    kinetic: Option<String>,
    #[arg(long)]
    err: Option<f64>,
    #[arg(long)]
    max_bond: Option<usize>,
    #[arg(long)]
    kl_samples: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    n_eigs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HardnessArgs {
    /// Formula in infix syntax; may be repeated.
    #[arg(long)]
    formula: Vec<String>,
    /// Files holding one infix formula or one DIMACS CNF each.
    #[arg(long)]
    file: Vec<PathBuf>,
    /// Number of random formulas with 2 to 10 variables.
    #[arg(long, default_value_t = 0)]
    random: usize,
    /// box or smooth
    #[arg(long, default_value = "smooth")]
    bump: String,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, default_value_t = harness::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_basis(s: &str) -> Result<BasisKind> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
    let num = |a: Option<&str>, default: f64| -> Result<f64> {
        a.map_or(Ok(default), |v| v.parse().map_err(|_| Error::Config(format!("bad basis parameter {v:?}"))))
    };
    match name {
        "hermite" => Ok(BasisKind::HermiteFunction {
            scale: num(arg, mpobm::basis::DEFAULT_HERMITE_SCALE)?,
        }),
        "fourier" => Ok(BasisKind::Fourier {
            period: num(arg, 10.0)?,
        }),
        other => Err(Error::Config(format!("unknown basis {other:?}"))),
    }
}

fn build_config(c: &Common, target: Option<TargetKind>) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(TargetKind::GaussianTridiag),
    };
    if let Some(kind) = target {
        cfg.target = TargetParams { kind, ..cfg.target };
    }
    if let Some(d) = &c.dims {
        cfg.dims = d.clone();
    }
    if let Some(b) = &c.basis {
        cfg.basis = parse_basis(b)?;
    }
    if let Some(k) = c.k {
        cfg.k = k;
    }
    if let Some(r) = c.r {
        cfg.r = r;
    }
    if let Some(e) = &c.estimator {
        cfg.estimators = e.iter().map(|s| EstimatorKind::parse(s)).collect::<Result<_>>()?;
    }
    if let Some(b) = &c.budget {
        cfg.budgets = if b.len() == 1 && b[0] == "grid" {
            SCALING_BUDGETS.to_vec()
        } else {
            b.iter()
                .map(|s| s.parse().map_err(|_| Error::Config(format!("bad budget {s:?}"))))
                .collect::<Result<_>>()?
        };
    }
    if let Some(h) = c.box_halfwidth {
        cfg.box_width = 2.0 * h;
    }
    if let Some(k) = &c.kinetic {
        cfg.kinetic = KineticMode::parse(k)?;
    }
    if let Some(e) = c.err {
        cfg.err = e;
    }
    if let Some(m) = c.max_bond {
        cfg.max_bond = m;
    }
    if let Some(n) = c.kl_samples {
        cfg.kl_samples = n;
    }
    if let Some(s) = &c.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(t) = c.threshold {
        cfg.kl_threshold = t;
    }
    if let Some(n) = c.n_eigs {
        cfg.n_eigs = n;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn targets(c: &Common) -> Result<Vec<Option<TargetKind>>> {
    match c.target.as_deref() {
        None => Ok(vec![None]),
        Some("all") => Ok(TargetKind::ALL.iter().map(|&k| Some(k)).collect()),
        Some(s) => Ok(vec![Some(TargetKind::parse(s)?)]),
    }
}

fn run(cli: Cli) -> Result<()> {
    let workers = harness::worker_count();
    match cli.cmd {
        Cmd::Fit(c) => {
            let cfg = build_config(&c, targets(&c)?[0])?;
            let cell = cfg.cells()[0];
            let out = harness::run_fit(&cfg, cell)?;
            let prov = Provenance::new(cfg.hash(), cell.seed);
            let stem = cfg.out.join(&out.row.run_id);
            save_hamiltonian(&out.hamiltonian, &stem.with_extension("h"), Some(prov.clone()))?;
            let mpo = out.model.mpo().ok_or_else(|| Error::Contract("fit did not produce an MPO".into()))?;
            save_mpo(mpo, cfg.err, cfg.max_bond, &stem.with_extension("mpo"), Some(prov))?;
            harness::append_results(&cfg.out.join("results.csv"), std::slice::from_ref(&out.row))?;
            print!("{}", harness::results_csv(&[out.row]));
        }
        Cmd::Sweep(c) => {
            for t in targets(&c)? {
                let cfg = build_config(&c, t)?;
                let rows = harness::run_sweep(&cfg, workers)?;
                print!("{}", harness::results_csv(&rows));
            }
        }
        Cmd::Gaps(c) => {
            for t in targets(&c)? {
                let cfg = build_config(&c, t)?;
                let g = harness::run_gaps(&cfg)?;
                if let Some(n) = &g.report.notice {
                    eprintln!("{}: {n}", g.target.name());
                }
                println!(
                    "{}: ground gap {} -> {}",
                    g.target.name(),
                    g.report.ground_gap().map_or("n/a".into(), |v| format!("{v:.6e}")),
                    g.path.display()
                );
            }
        }
        Cmd::Scaling(c) => {
            let cfg = build_config(&c, targets(&c)?[0])?;
            let report = harness::run_scaling(&cfg, workers)?;
            for p in &report.points {
                let req = p.required_budget.map_or("not reached".into(), |b| b.to_string());
                println!("{} D={} required B: {req}", p.estimator.name(), p.dim);
            }
            for f in &report.fits {
                match (&f.fit, &f.notice) {
                    (Some(fit), _) => println!(
                        "{}: {:?} fit a={:.4} b={:.4} R²={:.4}",
                        f.estimator.name(),
                        fit.law,
                        fit.a,
                        fit.b,
                        fit.r2
                    ),
                    (None, Some(n)) => println!("{}: {n}", f.estimator.name()),
                    (None, None) => {}
                }
            }
        }
        Cmd::Hardness(h) => {
            let bump = match h.bump.as_str() {
                "box" => BumpKind::Box,
                "smooth" => BumpKind::Smooth,
                other => return Err(Error::Config(format!("unknown bump {other:?}"))),
            };
            let mut formulas = Vec::new();
            for f in &h.formula {
                formulas.push(hardness::parse_formula(f)?);
            }
            for p in &h.file {
                let text = std::fs::read_to_string(p)?;
                formulas.push(hardness::parse_formula(&text).map_err(|e| e.context(p.display().to_string()))?);
            }
            if h.random > 0 {
                formulas.extend(hardness::benchmark_formulas(h.random, 2, 10, h.seed));
            }
            if formulas.is_empty() {
                return Err(Error::Config("no formulas given; use --formula, --file or --random".into()));
            }
            let run = harness::run_hardness(&formulas, bump, h.samples, h.seed, &h.out)?;
            for r in &run.reports {
                println!(
                    "MC={:<5} P(A)={:.6} ± {:.1e} predicted {:.6} decided {} {}",
                    r.model_count,
                    r.estimate,
                    r.stderr,
                    r.predicted,
                    if r.decided_sat { "SAT  " } else { "UNSAT" },
                    r.formula
                );
            }
            println!("all decisions correct: {}", run.all_correct);
        }
        Cmd::Oracle(c) => {
            let cfg = build_config(&c, targets(&c)?[0])?;
            for stem in harness::run_oracle(&cfg)? {
                println!("{}", stem.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
