//! Simultaneous declipping and denoising of DCT-sparse signals.
//!
//! Each trial draws a sparse DCT coefficient vector, maps it to the signal
//! domain, adds Gaussian noise and clips. Both the ℓ1 model (`B = 0`) and the
//! GME model (`B = √(c/μ)·√Λ·𝔏⁻¹`) are solved on the box `[−10, 10]ᵐ` for
//! every `μ` of a grid, and the best-`μ` averaged MSE is reported per model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fidelity::{BoxSet, SmoothFidelity};
use crate::gme::{design_b_invertible, overall_convexity_check, GmeRegularizer, DEFAULT_MARGIN};
use crate::linops::LinearMap;
use crate::proxlib::ProxFunction;
use crate::solver::{self, KmOptions, NrcProblem, DEFAULT_KAPPA, DEFAULT_MAX_ITER, DEFAULT_TOL_SQ};
use crate::vector::{dist_sq, norm, norm_inf};

/// `‖x⋆‖∞` after normalization.
pub const PEAK: f64 = 0.8;
/// Half-width of the constraint box `C = Π = [−BOX, BOX]ᵐ`.
pub const BOX_HALF_WIDTH: f64 = 10.0;
/// Tolerance of the convexity gate run before every GME solve.
pub const CONVEXITY_TOL: f64 = 1e-10;
pub const DESK_TRIALS: usize = 20;
pub const DESK_GRID_POINTS: usize = 25;
pub const FULL_TRIALS: usize = 100;

/// 25 log-spaced values in `[1, 100]`.
pub fn desk_mu_grid() -> Vec<f64> {
    log_grid(1.0, 100.0, DESK_GRID_POINTS)
}

/// `μ ∈ {1, 2, …, 100}`.
pub fn full_mu_grid() -> Vec<f64> {
    (1..=100).map(f64::from).collect()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeclipConfig {
    pub m: usize,
    pub theta: f64,
    pub snr_db: f64,
    pub sparsity_k: usize,
    pub trials: usize,
    pub mu_grid: Vec<f64>,
    pub c_gme: f64,
    pub seed: u64,
    pub kappa: f64,
    pub tol_sq: f64,
    pub max_iter: usize,
}

impl Default for DeclipConfig {
    fn default() -> Self {
        DeclipConfig {
            m: 256,
            theta: 0.4,
            snr_db: 10.0,
            sparsity_k: 16,
            trials: DESK_TRIALS,
            mu_grid: desk_mu_grid(),
            c_gme: DEFAULT_MARGIN,
            seed: 0,
            kappa: DEFAULT_KAPPA,
            tol_sq: DEFAULT_TOL_SQ,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl DeclipConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        if self.sparsity_k == 0 || self.sparsity_k > self.m {
            return bad(format!("sparsity_k must lie in [1, {}], got {}", self.m, self.sparsity_k));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.mu_grid.is_empty() || self.mu_grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("mu_grid must be nonempty with positive entries".into());
        }
        if !(self.c_gme > 0.0 && self.c_gme < 1.0) {
            return bad(format!("c_gme must lie in (0,1), got {}", self.c_gme));
        }
        if !(self.kappa > 1.0) {
            return bad(format!("kappa must exceed 1, got {}", self.kappa));
        }
        if !(self.tol_sq > 0.0) || self.max_iter == 0 {
            return bad("tol_sq and max_iter must be positive".into());
        }
        Ok(())
    }
}

/// Entrywise saturation at `±ϑ`; `|uᵢ| ≥ ϑ` maps to `ϑ·sign(uᵢ)`.
pub fn clip(u: &[f64], theta: f64) -> Vec<f64> {
    u.iter()
        .map(|&v| if v.abs() < theta { v } else { theta.copysign(v) })
        .collect()
}

/// DCT-sparse ground truth with `‖x⋆‖∞ = 0.8`.
pub fn synthesize_truth<R: Rng + ?Sized>(cfg: &DeclipConfig, idct: &LinearMap, rng: &mut R) -> Result<Vec<f64>> {
    loop {
        let mut coef = vec![0.0; cfg.m];
        for pos in index::sample(rng, cfg.m, cfg.sparsity_k) {
            coef[pos] = loop {
                let v: f64 = rng.gen_range(-1.0..1.0);
                if v != 0.0 {
                    break v;
                }
            };
        }
        let x = idct.apply(&coef)?;
        let peak = norm_inf(&x);
        if peak > 0.0 {
            return Ok(x.iter().map(|v| v * (PEAK / peak)).collect());
        }
    }
}

/// `E‖ε‖₂ / s` for `ε ~ N(0, s²I_m)`: the chi mean `√2·Γ((m+1)/2)/Γ(m/2)`.
pub fn chi_mean(m: usize) -> f64 {
    let m = m as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((m + 1.0) / 2.0) - ln_gamma(m / 2.0)).exp()
}

/// Noise level `s` with `20·log₁₀(‖x⋆‖ / E‖ε‖) = snr_db`.
pub fn snr_to_sigma(x_truth: &[f64], snr_db: f64) -> Result<f64> {
    let nx = norm(x_truth);
    if !(nx > 0.0) {
        return Err(Error::InvalidInput("snr_to_sigma needs a nonzero signal".into()));
    }
    Ok(nx / (10f64.powf(snr_db / 20.0) * chi_mean(x_truth.len())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// `μ‖𝔏·‖₁`, i.e. `B = 0`.
    L1,
    Gme,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::L1 => "l1",
            Model::Gme => "gme",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub mu: f64,
    /// `‖x⋆ − x̄‖₂²`.
    pub mse: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// One row of the per-trial CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub model: Model,
    pub theta: f64,
    pub snr_db: f64,
    pub mu: f64,
    pub trial: usize,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Best-`μ` summary of one model in one `(ϑ, SNR)` cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub model: Model,
    pub theta: f64,
    pub snr_db: f64,
    pub best_mu: f64,
    pub best_mse: f64,
    pub unconverged: usize,
    pub runs: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<CellSummary>,
}

impl ExperimentResult {
    pub fn summary(&self, model: Model) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.model == model)
    }
}

/// Observation and model ingredients of a single trial.
#[derive(Clone, Debug)]
pub struct TrialData {
    pub truth: Vec<f64>,
    pub noise_std: f64,
    pub observation: Vec<f64>,
    /// `f̃` built over `Π = [−10, 10]ᵐ`.
    pub fidelity: SmoothFidelity,
    /// Curvature floor of the clipped-Gaussian NLL over `ℝ`.
    pub lambda_diag: Vec<f64>,
}

/// Per-trial generator; the stream depends only on `(seed, trial)`, so all
/// cells share ground truths and standardized noise draws.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

pub fn draw_trial(cfg: &DeclipConfig, idct: &LinearMap, trial: usize) -> Result<TrialData> {
    let mut rng = trial_rng(cfg.seed, trial);
    let truth = synthesize_truth(cfg, idct, &mut rng)?;
    let s = snr_to_sigma(&truth, cfg.snr_db)?;
    let noisy: Vec<f64> = truth
        .iter()
        .map(|v| v + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let observation = clip(&noisy, cfg.theta);
    trial_from_observation(truth, observation, s, cfg.theta)
}

pub fn trial_from_observation(truth: Vec<f64>, observation: Vec<f64>, s: f64, theta: f64) -> Result<TrialData> {
    let m = observation.len();
    let base = SmoothFidelity::clipped_gaussian(observation.clone(), s, theta)?;
    let lambda_diag = base.curvature_profile(None)?.lambda_diag;
    let fidelity = base.build_extension(&BoxSet::uniform(m, -BOX_HALF_WIDTH, BOX_HALF_WIDTH)?)?;
    Ok(TrialData {
        truth,
        noise_std: s,
        observation,
        fidelity,
        lambda_diag,
    })
}

/// `μ‖·‖_B∘𝔏` with `B = √(c/μ)·√Λ·𝔏⁻¹`, without the convexity gate.
pub fn designed_regularizer(data: &TrialData, dct: &LinearMap, mu: f64, c_gme: f64) -> Result<GmeRegularizer> {
    let b = design_b_invertible(&dct.adjoint(), &data.lambda_diag, mu, c_gme)?;
    GmeRegularizer::new(ProxFunction::l1(data.truth.len()), dct.clone(), b, mu)
}

/// `min_{x ∈ [−10,10]ᵐ} f̃(x) + μΨ_B(𝔏x)` for a given regularizer.
pub fn assemble(data: &TrialData, reg: GmeRegularizer) -> Result<NrcProblem> {
    let m = data.truth.len();
    NrcProblem::new(
        LinearMap::identity(m),
        data.fidelity.clone(),
        reg,
        LinearMap::identity(m),
        ProxFunction::uniform_box(m, -BOX_HALF_WIDTH, BOX_HALF_WIDTH)?,
    )
}

/// Assembles the ℓ1 or GME model for one trial and `μ`. For the GME model the
/// convexity certificate is checked first and a failure is an error.
pub fn build_problem(data: &TrialData, dct: &LinearMap, model: Model, mu: f64, c_gme: f64) -> Result<NrcProblem> {
    let m = data.truth.len();
    let reg = match model {
        Model::L1 => GmeRegularizer::convex(dct.clone(), mu)?,
        Model::Gme => {
            let reg = designed_regularizer(data, dct, mu, c_gme)?;
            let report = overall_convexity_check(&LinearMap::identity(m), &data.lambda_diag, &reg, CONVEXITY_TOL)?;
            if !report.pass {
                return Err(Error::InvalidInput(format!(
                    "designed B fails the convexity certificate (min eigenvalue {:.3e})",
                    report.min_eig
                )));
            }
            reg
        }
    };
    assemble(data, reg)
}

/// Solves one model and returns the estimate with its [`TrialResult`].
pub fn solve_model(
    cfg: &DeclipConfig,
    data: &TrialData,
    dct: &LinearMap,
    model: Model,
    mu: f64,
) -> Result<(Vec<f64>, TrialResult)> {
    let p = build_problem(data, dct, model, mu, cfg.c_gme)?;
    let opts = KmOptions {
        tol_sq: cfg.tol_sq,
        max_iter: cfg.max_iter,
        ..KmOptions::default()
    };
    let (_, out) = solver::solve(&p, cfg.kappa, &opts)?;
    let result = TrialResult {
        mu,
        mse: dist_sq(&data.truth, &out.x),
        converged: out.converged,
        iterations: out.iterations,
    };
    Ok((out.x, result))
}

/// Runs every `(trial, μ, model)` of one cell. Work units run in parallel;
/// records come back ordered by `(trial, μ, model)`.
pub fn run_experiment(cfg: &DeclipConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let dct = LinearMap::dct(cfg.m);
    let idct = dct.adjoint();
    let trials: Vec<TrialData> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| draw_trial(cfg, &idct, t))
        .collect::<Result<_>>()?;

    let units: Vec<(usize, usize, Model)> = (0..cfg.trials)
        .flat_map(|t| (0..cfg.mu_grid.len()).flat_map(move |j| [(t, j, Model::L1), (t, j, Model::Gme)]))
        .collect();
    let records: Vec<RunRecord> = units
        .par_iter()
        .map(|&(t, j, model)| {
            let (_, r) = solve_model(cfg, &trials[t], &dct, model, cfg.mu_grid[j])?;
            Ok(RunRecord {
                model,
                theta: cfg.theta,
                snr_db: cfg.snr_db,
                mu: r.mu,
                trial: t,
                mse: r.mse,
                iterations: r.iterations,
                converged: r.converged,
            })
        })
        .collect::<Result<_>>()?;

    let summaries = [Model::L1, Model::Gme]
        .into_iter()
        .map(|model| summarize(cfg, &records, model))
        .collect();
    Ok(ExperimentResult { records, summaries })
}

/// Averages MSE per `μ` over converged trials and keeps the best `μ`.
/// A `μ` with no converged trial is skipped; if every `μ` is, `best_mse` is NaN.
fn summarize(cfg: &DeclipConfig, records: &[RunRecord], model: Model) -> CellSummary {
    let mut best = (f64::NAN, f64::INFINITY);
    let mut unconverged = 0;
    let mut runs = 0;
    for &mu in &cfg.mu_grid {
        let (mut sum, mut n) = (0.0, 0usize);
        for r in records.iter().filter(|r| r.model == model && r.mu == mu) {
            runs += 1;
            if r.converged {
                sum += r.mse;
                n += 1;
            } else {
                unconverged += 1;
            }
        }
        if n > 0 && sum / (n as f64) < best.1 {
            best = (mu, sum / n as f64);
        }
    }
    CellSummary {
        model,
        theta: cfg.theta,
        snr_db: cfg.snr_db,
        best_mu: best.0,
        best_mse: if best.0.is_nan() { f64::NAN } else { best.1 },
        unconverged,
        runs,
    }
}

/// Cartesian sweep over clip levels and SNRs, cells in row-major order.
pub fn run_sweep(base: &DeclipConfig, thetas: &[f64], snrs_db: &[f64]) -> Result<Vec<ExperimentResult>> {
    let mut out = Vec::with_capacity(thetas.len() * snrs_db.len());
    for &theta in thetas {
        for &snr_db in snrs_db {
            let cfg = DeclipConfig {
                theta,
                snr_db,
                ..base.clone()
            };
            out.push(run_experiment(&cfg)?);
        }
    }
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

/// Columns `model,theta,snr_db,mu,trial,mse,iterations,converged`.
pub fn write_records_csv(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    write_rows(path, results.iter().flat_map(|r| &r.records))
}

pub fn write_summary_csv(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    write_rows(path, results.iter().flat_map(|r| &r.summaries))
}

/// Averaged MSE against SNR, one panel per clip level and one line per model.
pub fn summary_svg(results: &[ExperimentResult]) -> String {
    let summaries: Vec<&CellSummary> = results.iter().flat_map(|r| &r.summaries).collect();
    let mut thetas: Vec<f64> = summaries.iter().map(|s| s.theta).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let finite = summaries.iter().map(|s| s.best_mse).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (0.0f64.min(lo), hi.max(lo + 1e-12)) } else { (0.0, 1.0) };

    let (pw, ph, pad) = (320.0, 240.0, 50.0);
    let width = thetas.len().max(1) as f64 * (pw + pad) + pad;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" font-family="sans-serif" font-size="11">"#,
        ph + 2.0 * pad
    );
    for (k, &theta) in thetas.iter().enumerate() {
        let x0 = pad + k as f64 * (pw + pad);
        let y0 = pad;
        let mut cells: Vec<&&CellSummary> = summaries.iter().filter(|s| s.theta == theta).collect();
        cells.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
        let (smin, smax) = cells
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.snr_db), b.max(s.snr_db)));
        let span = if smax > smin { smax - smin } else { 1.0 };
        let px = |snr: f64| x0 + (snr - smin) / span * pw;
        let py = |v: f64| y0 + ph - (v - lo) / (hi - lo) * ph;
        let _ = writeln!(
            svg,
            r#"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">clip level {theta}</text>"#,
            x0 + pw / 2.0,
            y0 - 10.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">SNR [dB]</text>"#,
            x0 + pw / 2.0,
            y0 + ph + 35.0
        );
        for (model, color) in [(Model::L1, "#1f77b4"), (Model::Gme, "#d62728")] {
            let pts: Vec<String> = cells
                .iter()
                .filter(|s| s.model == model && s.best_mse.is_finite())
                .map(|s| format!("{:.2},{:.2}", px(s.snr_db), py(s.best_mse)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
            for s in cells.iter().filter(|s| s.model == model && s.best_mse.is_finite()) {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    px(s.snr_db),
                    py(s.best_mse)
                );
            }
        }
        for s in cells.iter().filter(|s| s.model == Model::L1) {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                px(s.snr_db),
                y0 + ph + 15.0,
                s.snr_db
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{hi:.3}</text><text x="{}" y="{}" text-anchor="end">{lo:.3}</text>"#,
            x0 - 4.0,
            y0 + 4.0,
            x0 - 4.0,
            y0 + ph
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{pad}" y="{}" fill="#1f77b4">l1</text><text x="{}" y="{}" fill="#d62728">gme</text>"##,
        ph + 2.0 * pad - 5.0,
        pad + 30.0,
        ph + 2.0 * pad - 5.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_summary_svg(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    fs::write(path, summary_svg(results)).map_err(io_err(path))
}
