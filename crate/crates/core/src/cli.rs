//! Command-line front end: `solve`, `declip` and `check`, all driven by one
//! TOML configuration file.
//!
//! Exit codes: 0 success, 1 a diagnostic failed, 2 bad input, 3 the
//! convexity certificate failed, 4 the solver did not converge.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::declip::{self, DeclipConfig, Model};
use crate::error::{Error, Result};
use crate::fidelity::{BoxSet, SmoothFidelity};
use crate::gme::{design_b_invertible, overall_convexity_check, GmeRegularizer, DEFAULT_MARGIN};
use crate::linops::{LinearMap, MapKind};
use crate::proxlib::ProxFunction;
use crate::solver::{
    self, apply_t, existence_diagnostics, p_min_eigenvalue, p_norm_sq, KmOptions, NrcProblem, SolverState,
    StepParams, Verdict, DEFAULT_KAPPA, DEFAULT_MAX_ITER, DEFAULT_TOL_SQ, SIGMA_FACTOR,
};
use crate::textio;
use crate::vector::dot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVEX: i32 = 3;
pub const EXIT_UNCONVERGED: i32 = 4;

/// Tolerance of the convexity certificate `min eig ≥ −tol`.
pub const CONVEXITY_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "nrcgme", version, about = "Convexity-preserving GME-regularized regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the problem in the `[problem]` section.
    Solve(CommonArgs),
    /// Run the declipping experiment in the `[declip]` section.
    Declip(DeclipArgs),
    /// Print the diagnostic table for the configured problem.
    Check(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DeclipArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// 100 trials and μ ∈ {1, …, 100}.
    #[arg(long)]
    pub full: bool,
    /// Print the resolved protocol and exit without solving.
    #[arg(long)]
    pub dry_run: bool,
}

/// Whole configuration file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub solver: SolverSection,
    pub problem: Option<ProblemSection>,
    pub declip: Option<DeclipSection>,
    pub check: CheckSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub kappa: f64,
    pub tol_sq: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Write the iteration trace of `solve`.
    pub trace: bool,
    pub objective_every: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            kappa: DEFAULT_KAPPA,
            tol_sq: DEFAULT_TOL_SQ,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            trace: true,
            objective_every: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum VectorSource {
    Inline(Vec<f64>),
    File(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    File(PathBuf),
}

/// A linear operator. Square kinds take their size from context.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    #[default]
    Identity,
    Zero,
    Dct,
    InverseDct,
    Diagonal {
        values: VectorSource,
    },
    Dense {
        rows: MatrixSource,
    },
    Scaled {
        scale: f64,
        of: Box<OperatorSpec>,
    },
    /// Only for `B`: `√(c/μ)·√Λ·𝔏⁻¹`.
    Design {
        #[serde(default = "default_margin")]
        margin: f64,
    },
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FidelitySpec {
    Quadratic,
    ClippedGaussian { noise_std: f64, clip_level: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: BoundSpec,
    pub upper: BoundSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Uniform(f64),
    PerEntry(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Signal dimension; defaults to the observation length.
    pub n: Option<usize>,
    pub observation: VectorSource,
    pub fidelity: FidelitySpec,
    /// Replace `f` by its quadratic extension outside this box.
    pub extension: Option<BoxSpec>,
    pub mu: f64,
    #[serde(default)]
    pub a: OperatorSpec,
    #[serde(default)]
    pub l: OperatorSpec,
    #[serde(default = "zero_spec")]
    pub b: OperatorSpec,
    #[serde(default)]
    pub c_map: OperatorSpec,
    #[serde(rename = "box")]
    pub box_set: BoxSpec,
    /// Curvature floor; defaults to the infimum of `fᵢ″` over `ℝ`.
    pub lambda: Option<VectorSource>,
    pub beta: Option<f64>,
}

fn zero_spec() -> OperatorSpec {
    OperatorSpec::Zero
}

/// `[declip]`: any field left out keeps its desk-scale default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeclipSection {
    pub m: Option<usize>,
    pub sparsity_k: Option<usize>,
    pub trials: Option<usize>,
    pub mu_grid: Option<Vec<f64>>,
    pub c_gme: Option<f64>,
    /// Clip levels of the sweep.
    pub thetas: Option<Vec<f64>>,
    /// SNRs of the sweep in dB.
    pub snr_dbs: Option<Vec<f64>>,
    pub svg: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    /// Multiplies `B` before the diagnostics run.
    pub b_scale: f64,
    pub samples: usize,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            b_scale: 1.0,
            samples: 20,
        }
    }
}

/// An error together with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(EXIT_INPUT, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Declip(a) => cmd_declip(a),
        Command::Check(a) => cmd_check(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

struct Loaded {
    cfg: RunConfig,
    base_dir: PathBuf,
    out: PathBuf,
}

fn load(args: &CommonArgs) -> CliResult<Loaded> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
    }
    let base_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(|o| base_dir.join(o)))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Loaded { cfg, base_dir, out })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| {
        Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn resolve_vector(src: &VectorSource, base: &Path) -> Result<Vec<f64>> {
    match src {
        VectorSource::Inline(v) => Ok(v.clone()),
        VectorSource::File(p) => textio::read_vector(&base.join(p)),
    }
}

fn resolve_bound(b: &BoundSpec, dim: usize) -> Result<Vec<f64>> {
    match b {
        BoundSpec::Uniform(v) => Ok(vec![*v; dim]),
        BoundSpec::PerEntry(v) if v.len() == dim => Ok(v.clone()),
        BoundSpec::PerEntry(v) => Err(Error::InvalidInput(format!(
            "box bound has {} entries, expected {dim}",
            v.len()
        ))),
    }
}

/// Builds an operator; `dim` is the input size used by square kinds.
fn build_operator(spec: &OperatorSpec, dim: usize, base: &Path) -> Result<LinearMap> {
    match spec {
        OperatorSpec::Identity => Ok(LinearMap::identity(dim)),
        OperatorSpec::Zero => Ok(LinearMap::zero(dim)),
        OperatorSpec::Dct => Ok(LinearMap::dct(dim)),
        OperatorSpec::InverseDct => Ok(LinearMap::inverse_dct(dim)),
        OperatorSpec::Diagonal { values } => LinearMap::diagonal(resolve_vector(values, base)?),
        OperatorSpec::Dense { rows } => match rows {
            MatrixSource::Inline(r) => LinearMap::from_rows(r),
            MatrixSource::File(p) => LinearMap::from_rows(&textio::read_matrix(&base.join(p))?),
        },
        OperatorSpec::Scaled { scale, of } => Ok(LinearMap::scaled(*scale, build_operator(of, dim, base)?)),
        OperatorSpec::Design { .. } => Err(Error::InvalidInput("kind = \"design\" is only valid for b".into())),
    }
}

/// `𝔏⁻¹` for the invertible kinds the `design` rule supports.
fn inverse_of(l: &LinearMap) -> Result<LinearMap> {
    match l.kind() {
        MapKind::Identity => Ok(l.clone()),
        MapKind::Dct | MapKind::InverseDct => Ok(l.adjoint()),
        MapKind::Diagonal => {
            let d = l.diagonal_entries().unwrap_or_default();
            if d.iter().any(|v| *v == 0.0) {
                return Err(Error::InvalidInput("design needs an invertible L".into()));
            }
            LinearMap::diagonal(d.iter().map(|v| 1.0 / v).collect())
        }
        _ => {
            let dense: DMatrix<f64> = l.to_dense(crate::linops::DENSE_CAP)?;
            let inv = dense
                .try_inverse()
                .ok_or_else(|| Error::InvalidInput("design needs an invertible L".into()))?;
            LinearMap::dense(inv)
        }
    }
}

/// A fully assembled problem together with its curvature floor.
pub struct Assembled {
    pub problem: NrcProblem,
    pub lambda_diag: Vec<f64>,
}

/// Assembles the `[problem]` section; `b_scale` multiplies `B`.
pub fn assemble_problem(sec: &ProblemSection, base: &Path, b_scale: f64) -> Result<Assembled> {
    let y = resolve_vector(&sec.observation, base)?;
    let m = y.len();
    let n = sec.n.unwrap_or(m);
    let base_f = match &sec.fidelity {
        FidelitySpec::Quadratic => SmoothFidelity::quadratic(y)?,
        FidelitySpec::ClippedGaussian { noise_std, clip_level } => {
            SmoothFidelity::clipped_gaussian_tolerant(y, *noise_std, *clip_level)?
        }
    };
    let lambda_diag = match &sec.lambda {
        Some(src) => resolve_vector(src, base)?,
        None => base_f.curvature_profile(None)?.lambda_diag,
    };
    let f = match &sec.extension {
        Some(pi) => base_f.build_extension(&BoxSet::new(resolve_bound(&pi.lower, m)?, resolve_bound(&pi.upper, m)?)?)?,
        None => base_f,
    };
    let a = build_operator(&sec.a, n, base)?;
    let l = build_operator(&sec.l, n, base)?;
    let b = match &sec.b {
        OperatorSpec::Design { margin } => {
            if !a.is_identity() {
                return Err(Error::InvalidInput("b = design requires A = identity".into()));
            }
            design_b_invertible(&inverse_of(&l)?, &lambda_diag, sec.mu, *margin)?
        }
        other => build_operator(other, l.out_dim(), base)?,
    };
    let b = LinearMap::scaled(b_scale, b);
    let c_map = build_operator(&sec.c_map, n, base)?;
    let c_dim = c_map.out_dim();
    let c_set = ProxFunction::boxed(resolve_bound(&sec.box_set.lower, c_dim)?, resolve_bound(&sec.box_set.upper, c_dim)?)?;
    let reg = GmeRegularizer::new(ProxFunction::l1(l.out_dim()), l, b, sec.mu)?;
    let mut problem = NrcProblem::new(a, f, reg, c_map, c_set)?;
    if let Some(beta) = sec.beta {
        problem = problem.with_beta(beta)?;
    }
    Ok(Assembled { problem, lambda_diag })
}

fn print_existence(p: &NrcProblem) {
    let report = existence_diagnostics(p);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.certified() {
        eprintln!("warning: no sufficient condition for existence of a minimizer could be certified");
    }
}

pub fn cmd_solve(args: &CommonArgs) -> CliResult<i32> {
    let Loaded { cfg, base_dir, out } = load(args)?;
    let sec = cfg
        .problem
        .as_ref()
        .ok_or_else(|| Failure::new(EXIT_INPUT, "config has no [problem] section"))?;
    let Assembled { problem, lambda_diag } = assemble_problem(sec, &base_dir, 1.0)?;
    let report = overall_convexity_check(problem.a(), &lambda_diag, problem.regularizer(), CONVEXITY_TOL)?;
    if !report.pass {
        return Err(Failure::new(
            EXIT_NOT_CONVEX,
            format!(
                "overall convexity certificate failed (min eigenvalue {:.6e}); refusing to solve",
                report.min_eig
            ),
        ));
    }
    print_existence(&problem);
    let opts = KmOptions {
        tol_sq: cfg.solver.tol_sq,
        max_iter: cfg.solver.max_iter,
        trace: cfg.solver.trace,
        objective_every: cfg.solver.objective_every,
    };
    let (params, outcome) = solver::solve(&problem, cfg.solver.kappa, &opts)?;
    ensure_dir(&out)?;
    textio::write_vector(&out.join("x.txt"), &outcome.x)?;
    if cfg.solver.trace {
        solver::write_trace_csv(&out.join("trace.csv"), &outcome.trace)?;
    }
    let (objective, _) = problem.objective(&outcome.x, solver::OBJECTIVE_TOL)?;
    println!(
        "rho={:e} sigma={:e} tau={:e} theta={:.6}",
        params.rho, params.sigma, params.tau, params.theta
    );
    println!(
        "iterations={} converged={} residual_sq={:e} objective={:.10e}",
        outcome.iterations, outcome.converged, outcome.state.residual_sq, objective
    );
    if !outcome.converged {
        eprintln!("error: no convergence within {} iterations; partial output written", cfg.solver.max_iter);
        return Ok(EXIT_UNCONVERGED);
    }
    Ok(EXIT_OK)
}

/// Experiment settings resolved from the config and flags.
#[derive(Debug, Clone)]
pub struct DeclipPlan {
    pub base: DeclipConfig,
    pub thetas: Vec<f64>,
    pub snr_dbs: Vec<f64>,
    pub svg: bool,
}

pub fn resolve_declip(cfg: &RunConfig, full: bool) -> Result<DeclipPlan> {
    let sec = cfg.declip.clone().unwrap_or_default();
    let d = DeclipConfig::default();
    let mut base = DeclipConfig {
        m: sec.m.unwrap_or(d.m),
        sparsity_k: sec.sparsity_k.unwrap_or(d.sparsity_k),
        trials: sec.trials.unwrap_or(d.trials),
        mu_grid: sec.mu_grid.unwrap_or(d.mu_grid),
        c_gme: sec.c_gme.unwrap_or(d.c_gme),
        seed: cfg.solver.seed,
        kappa: cfg.solver.kappa,
        tol_sq: cfg.solver.tol_sq,
        max_iter: cfg.solver.max_iter,
        ..d
    };
    if full {
        base.trials = declip::FULL_TRIALS;
        base.mu_grid = declip::full_mu_grid();
    }
    let thetas = sec.thetas.unwrap_or_else(|| vec![0.4, 0.6]);
    let snr_dbs = sec.snr_dbs.unwrap_or_else(|| vec![5.0, 10.0, 15.0]);
    if thetas.is_empty() || snr_dbs.is_empty() {
        return Err(Error::InvalidInput("thetas and snr_dbs must be nonempty".into()));
    }
    for &theta in &thetas {
        for &snr_db in &snr_dbs {
            DeclipConfig {
                theta,
                snr_db,
                ..base.clone()
            }
            .validate()?;
        }
    }
    Ok(DeclipPlan {
        base,
        thetas,
        snr_dbs,
        svg: sec.svg.unwrap_or(true),
    })
}

fn fmt_grid(g: &[f64]) -> String {
    let all_int = g.iter().all(|v| v.fract() == 0.0);
    if all_int && g.len() > 2 && g.windows(2).all(|w| w[1] - w[0] == 1.0) {
        return format!("{{{}, {}, ..., {}}} ({} values)", g[0], g[1], g[g.len() - 1], g.len());
    }
    let items: Vec<String> = g.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}] ({} values)", items.join(", "), g.len())
}

/// Protocol audit: every knob of the experiment and the step parameters of
/// the first trial.
pub fn print_dry_run(plan: &DeclipPlan) -> Result<()> {
    let b = &plan.base;
    println!("signal length m        = {}", b.m);
    println!("sparsity k             = {}", b.sparsity_k);
    println!("peak |x*|_inf          = {}", declip::PEAK);
    println!("clip levels            = {:?}", plan.thetas);
    println!("SNRs [dB]              = {:?}", plan.snr_dbs);
    println!("trials per cell        = {}", b.trials);
    println!("mu grid                = {}", fmt_grid(&b.mu_grid));
    println!(
        "constraint box C, Pi    = [-{0}, {0}]^{1}",
        declip::BOX_HALF_WIDTH,
        b.m
    );
    println!("GME margin c           = {}", b.c_gme);
    println!("stopping rule          = ||h_k - h_(k-1)||_H^2 < {:e}", b.tol_sq);
    println!("max iterations         = {}", b.max_iter);
    println!("tau                    = {}/(2 rho)", b.kappa);
    println!("sigma                  = {SIGMA_FACTOR} x sigma lower bound");
    println!("seed                   = {}", b.seed);

    let cfg = DeclipConfig {
        theta: plan.thetas[0],
        snr_db: plan.snr_dbs[0],
        ..b.clone()
    };
    let dct = LinearMap::dct(cfg.m);
    let data = declip::draw_trial(&cfg, &dct.adjoint(), 0)?;
    let mu = cfg.mu_grid[0];
    for model in [Model::L1, Model::Gme] {
        let p = declip::build_problem(&data, &dct, model, mu, cfg.c_gme)?;
        let s = solver::choose_sigma_tau(&p, cfg.kappa)?;
        println!(
            "trial 0, theta={}, snr={} dB, mu={mu}, {:<3}: rho={:.6e} tau*2rho={:.6} sigma/bound={:.6} theta_avg={:.6}",
            cfg.theta,
            cfg.snr_db,
            model.label(),
            s.rho,
            s.tau * 2.0 * s.rho,
            s.sigma / StepParams::sigma_bound(&p, s.rho, s.tau),
            s.theta
        );
    }
    Ok(())
}

pub fn cmd_declip(args: &DeclipArgs) -> CliResult<i32> {
    let Loaded { cfg, out, .. } = load(&args.common)?;
    let plan = resolve_declip(&cfg, args.full)?;
    if args.dry_run {
        print_dry_run(&plan)?;
        return Ok(EXIT_OK);
    }
    ensure_dir(&out)?;
    let mut results = Vec::new();
    for &theta in &plan.thetas {
        for &snr_db in &plan.snr_dbs {
            let cell = DeclipConfig {
                theta,
                snr_db,
                ..plan.base.clone()
            };
            let r = declip::run_experiment(&cell)?;
            for s in &r.summaries {
                eprintln!(
                    "theta={theta} snr={snr_db}dB {:<3} best mu={:.4} averaged MSE={:.6} unconverged={}/{}",
                    s.model.label(),
                    s.best_mu,
                    s.best_mse,
                    s.unconverged,
                    s.runs
                );
            }
            results.push(r);
        }
    }
    declip::write_records_csv(&out.join("declip_runs.csv"), &results)?;
    declip::write_summary_csv(&out.join("declip_summary.csv"), &results)?;
    if plan.svg {
        declip::write_summary_svg(&out.join("declip_summary.svg"), &results)?;
    }
    let failed = results
        .iter()
        .flat_map(|r| &r.summaries)
        .any(|s| !s.best_mse.is_finite());
    if failed {
        eprintln!("error: some cell has no converged trial");
        return Ok(EXIT_UNCONVERGED);
    }
    Ok(EXIT_OK)
}

/// One line of the diagnostic table.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: &'static str,
    /// `None` when the diagnostic could not be run.
    pub pass: Option<bool>,
    pub detail: String,
}

impl CheckLine {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        CheckLine {
            name,
            pass: Some(pass),
            detail,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn adjoint_gap(map: &LinearMap, rng: &mut ChaCha8Rng, samples: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = gaussian(rng, map.in_dim());
        let y = gaussian(rng, map.out_dim());
        let lx = map.apply(&x)?;
        let ly = map.adjoint_apply(&y)?;
        let scale = crate::vector::norm(&lx) * crate::vector::norm(&y) + crate::vector::norm(&x) * crate::vector::norm(&ly);
        let gap = (dot(&lx, &y) - dot(&x, &ly)).abs();
        worst = worst.max(if scale > 0.0 { gap / scale } else { gap });
    }
    Ok(worst)
}

/// Worst relative error between `fᵢ′` and a central difference, over rows
/// and random points, some of them outside any extension box.
fn gradient_fd_error(f: &SmoothFidelity, rng: &mut ChaCha8Rng, samples: usize) -> f64 {
    let m = f.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.gen_range(0..m);
        let r: f64 = rng.gen_range(-15.0..15.0);
        let h = 1e-6 * r.abs().max(1.0);
        let fd = (f.row(i, r + h).0 - f.row(i, r - h).0) / (2.0 * h);
        let d1 = f.row(i, r).1;
        worst = worst.max((fd - d1).abs() / d1.abs().max(1.0));
    }
    worst
}

fn random_state(p: &NrcProblem, rng: &mut ChaCha8Rng) -> SolverState {
    let (nx, nz, nc) = p.dims();
    SolverState {
        x: gaussian(rng, nx),
        v: gaussian(rng, nz),
        w: gaussian(rng, nz),
        z: gaussian(rng, nc),
        iteration: 0,
        residual_sq: f64::INFINITY,
    }
}

fn state_diff(a: &SolverState, b: &SolverState) -> SolverState {
    let d = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x - y).collect();
    SolverState {
        x: d(&a.x, &b.x),
        v: d(&a.v, &b.v),
        w: d(&a.w, &b.w),
        z: d(&a.z, &b.z),
        iteration: 0,
        residual_sq: 0.0,
    }
}

/// Runs every diagnostic on an assembled problem.
pub fn diagnostics(a: &Assembled, kappa: f64, seed: u64, samples: usize) -> Vec<CheckLine> {
    let p = &a.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();

    let maps = [
        ("adjoint A", p.a()),
        ("adjoint L", p.regularizer().l()),
        ("adjoint B", p.regularizer().b()),
        ("adjoint C-map", p.c_map()),
    ];
    for (name, map) in maps {
        lines.push(match adjoint_gap(map, &mut rng, samples) {
            Ok(gap) => CheckLine::new(name, gap <= 1e-10, format!("relative gap {gap:.2e}")),
            Err(e) => CheckLine::new(name, false, e.to_string()),
        });
    }

    let fd = gradient_fd_error(p.fidelity(), &mut rng, samples.max(100));
    lines.push(CheckLine::new("gradient vs finite difference", fd < 1e-5, format!("worst relative error {fd:.2e}")));

    lines.push(
        match overall_convexity_check(p.a(), &a.lambda_diag, p.regularizer(), CONVEXITY_TOL) {
            Ok(r) => CheckLine::new("overall convexity", r.pass, format!("min eigenvalue {:.3e}", r.min_eig)),
            Err(Error::DiagnosticUnavailable(msg)) => CheckLine {
                name: "overall convexity",
                pass: None,
                detail: msg,
            },
            Err(e) => CheckLine::new("overall convexity", false, e.to_string()),
        },
    );

    let params = match solver::choose_sigma_tau(p, kappa) {
        Ok(s) => {
            lines.push(CheckLine::new(
                "step parameters",
                true,
                format!("rho={:.3e} sigma={:.3e} tau={:.3e}", s.rho, s.sigma, s.tau),
            ));
            Some(s)
        }
        Err(e) => {
            lines.push(CheckLine::new("step parameters", false, e.to_string()));
            None
        }
    };

    if let Some(s) = params {
        lines.push(CheckLine::new(
            "theta in (0,2)",
            s.theta > 0.0 && s.theta < 2.0,
            format!("theta={:.6}", s.theta),
        ));
        lines.push(match p_min_eigenvalue(p, &s) {
            Ok(e) => CheckLine::new("P positive definite", e > 0.0, format!("min eigenvalue {e:.3e}")),
            Err(Error::DiagnosticUnavailable(msg)) => CheckLine {
                name: "P positive definite",
                pass: None,
                detail: msg,
            },
            Err(e) => CheckLine::new("P positive definite", false, e.to_string()),
        });
        let mut worst: f64 = 0.0;
        let mut err = None;
        for _ in 0..samples {
            let h1 = random_state(p, &mut rng);
            let h2 = random_state(p, &mut rng);
            let pair = apply_t(p, &s, &h1).and_then(|t1| {
                let t2 = apply_t(p, &s, &h2)?;
                Ok((p_norm_sq(p, &s, &state_diff(&t1, &t2))?, p_norm_sq(p, &s, &state_diff(&h1, &h2))?))
            });
            match pair {
                Ok((num, den)) => worst = worst.max((num / den).sqrt()),
                Err(e) => err = Some(e.to_string()),
            }
        }
        lines.push(match err {
            Some(e) => CheckLine::new("T nonexpansive in P-norm", false, e),
            None => CheckLine::new(
                "T nonexpansive in P-norm",
                worst <= 1.0 + 1e-10,
                format!("worst ratio {worst:.12}"),
            ),
        });
    }

    let ex = existence_diagnostics(p);
    let verdict = |v: &Verdict| match v {
        Verdict::Holds => "holds".to_string(),
        Verdict::DoesNotHold(why) => format!("fails ({why})"),
        Verdict::NotCheckable(why) => format!("not checkable ({why})"),
    };
    lines.push(CheckLine::new(
        "existence of a minimizer",
        ex.certified(),
        format!(
            "multipolyhedral: {}; bounded: {}; coercive/null: {}",
            verdict(&ex.multipolyhedral),
            verdict(&ex.bounded),
            verdict(&ex.coercive_null)
        ),
    ));
    lines
}

/// Problem checked by `check` when the config describes the experiment: the
/// GME model of trial 0 of the first cell at the median `μ`.
fn declip_check_problem(cfg: &RunConfig, b_scale: f64) -> Result<Assembled> {
    let plan = resolve_declip(cfg, false)?;
    let cell = DeclipConfig {
        theta: plan.thetas[0],
        snr_db: plan.snr_dbs[0],
        ..plan.base
    };
    let dct = LinearMap::dct(cell.m);
    let data = declip::draw_trial(&cell, &dct.adjoint(), 0)?;
    let mu = cell.mu_grid[cell.mu_grid.len() / 2];
    let reg = declip::designed_regularizer(&data, &dct, mu, cell.c_gme)?;
    let reg = GmeRegularizer::new(
        reg.psi().clone(),
        reg.l().clone(),
        LinearMap::scaled(b_scale, reg.b().clone()),
        mu,
    )?;
    let problem = declip::assemble(&data, reg)?;
    Ok(Assembled {
        problem,
        lambda_diag: data.lambda_diag,
    })
}

pub fn cmd_check(args: &CommonArgs) -> CliResult<i32> {
    let Loaded { cfg, base_dir, .. } = load(args)?;
    let b_scale = cfg.check.b_scale;
    let assembled = match (&cfg.problem, &cfg.declip) {
        (Some(sec), _) => assemble_problem(sec, &base_dir, b_scale)?,
        (None, Some(_)) => declip_check_problem(&cfg, b_scale)?,
        (None, None) => return Err(Failure::new(EXIT_INPUT, "config has neither [problem] nor [declip]")),
    };
    let lines = diagnostics(&assembled, cfg.solver.kappa, cfg.solver.seed, cfg.check.samples.max(1));
    let width = lines.iter().map(|l| l.name.len()).max().unwrap_or(0);
    for l in &lines {
        let tag = match l.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        println!("{tag}  {:<width$}  {}", l.name, l.detail);
    }
    if lines.iter().any(|l| l.pass == Some(false)) {
        Ok(EXIT_CHECK_FAILED)
    } else {
        Ok(EXIT_OK)
    }
}
