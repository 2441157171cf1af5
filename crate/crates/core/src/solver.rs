//! Fixed-point solver for `min_{𝔠x ∈ C} f(Ax) + μ·Ψ_B(𝔏x)`.
//!
//! The solution set is `Ξ(Fix T)` for an operator `T` on the product space
//! `H = X × Z × Z × 𝔷` that is averaged nonexpansive in the metric induced by
//! the block operator `𝔓`. Plain iteration `h ← T(h)` therefore converges.
//! Every application of `T` needs one gradient of `f`, one prox of `Ψ`, one
//! prox of `μΨ/τ` and one projection onto `C`; there are no inner loops.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::fidelity::SmoothFidelity;
use crate::gme::{gme_value, GmeRegularizer};
use crate::linops::{null_intersection_trivial, power_iteration_sq, LinearMap, DENSE_CAP, NORM_ITERS, NORM_TOL};
use crate::proxlib::ProxFunction;
use crate::vector::{axpy, dist_sq, dot, norm_sq};

/// Safety multiplier applied to the right side of the `σ` bound.
pub const SIGMA_FACTOR: f64 = 1.001;
/// Default `κ` in `τ = κ/(2ρ)`.
pub const DEFAULT_KAPPA: f64 = 5.0;
/// Default stopping threshold on `‖h_k − h_{k−1}‖²_H`.
pub const DEFAULT_TOL_SQ: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 200_000;
/// Inner tolerance for objective logging.
pub const OBJECTIVE_TOL: f64 = 1e-8;
/// Objective logging cadence.
pub const OBJECTIVE_EVERY: usize = 100;

/// Operator norms the step-size rule needs, all upper estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemNorms {
    /// `‖A‖²`
    pub a_sq: f64,
    /// `‖B‖²`
    pub b_sq: f64,
    /// `‖𝔏*B*B𝔏‖ = ‖B𝔏‖²`
    pub lbbl: f64,
    /// `‖B*B𝔏‖²`
    pub bbl_sq: f64,
    /// `‖𝔏*𝔏 + 𝔠*𝔠‖`
    pub lc: f64,
}

#[derive(Clone, Debug)]
pub struct NrcProblem {
    a: LinearMap,
    f: SmoothFidelity,
    reg: GmeRegularizer,
    c_map: LinearMap,
    c_set: ProxFunction,
    beta: f64,
    grad_lip: f64,
    bl: LinearMap,
    b_is_zero: bool,
    norms: ProblemNorms,
    feasible_point: Vec<f64>,
}

impl NrcProblem {
    /// Assembles the model and certifies `β` and a feasible point.
    ///
    /// `β` is set to the certificate `‖A‖²·L_f + μ‖𝔏*B*B𝔏‖`, where `L_f` is
    /// the gradient-Lipschitz bound of `f` over all of `ℝᵐ`.
    pub fn new(
        a: LinearMap,
        f: SmoothFidelity,
        reg: GmeRegularizer,
        c_map: LinearMap,
        c_set: ProxFunction,
    ) -> Result<Self> {
        let n = a.in_dim();
        check_dim("A output vs fidelity", a.out_dim(), f.dim())?;
        check_dim("L input vs A input", n, reg.l().in_dim())?;
        check_dim("constraint map input vs A input", n, c_map.in_dim())?;
        check_dim("constraint set vs constraint map", c_map.out_dim(), c_set.dim())?;
        if !matches!(c_set, ProxFunction::IndicatorBox { .. }) {
            return Err(Error::InvalidInput("constraint set must be a box indicator".into()));
        }
        let grad_lip = f.curvature_profile(None)?.grad_lip;
        if !grad_lip.is_finite() {
            return Err(Error::InvalidInput("fidelity gradient is not globally Lipschitz".into()));
        }

        let bl = LinearMap::compose(reg.b(), reg.l())?;
        let b_is_zero = reg.b().is_zero();
        let bbl = LinearMap::compose(&reg.b().adjoint(), &bl)?;
        // ‖𝔏*𝔏 + 𝔠*𝔠‖ = ‖[𝔏; 𝔠]‖², exactly 2 when both are isometries.
        let lc = if is_isometry(reg.l()) && is_isometry(&c_map) {
            2.0
        } else {
            let l = reg.l().clone();
            let cm = c_map.clone();
            power_iteration_sq(
                n,
                |x| {
                    let mut out = l.eval_adjoint(&l.eval(x));
                    axpy(1.0, &cm.eval_adjoint(&cm.eval(x)), &mut out);
                    out
                },
                NORM_ITERS,
                NORM_TOL,
            )
        };
        let norms = ProblemNorms {
            a_sq: a.norm_sq_upper(),
            b_sq: reg.b().norm_sq_upper(),
            lbbl: bl.norm_sq_upper(),
            bbl_sq: bbl.norm_sq_upper(),
            lc,
        };
        let beta = norms.a_sq * grad_lip + reg.mu() * norms.lbbl;
        let feasible_point = find_feasible_point(&c_map, &c_set)?;
        Ok(NrcProblem {
            a,
            f,
            reg,
            c_map,
            c_set,
            beta,
            grad_lip,
            bl,
            b_is_zero,
            norms,
            feasible_point,
        })
    }

    /// Replaces `β` with a larger user value; smaller values are rejected.
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta >= self.beta) {
            return Err(Error::InvalidInput(format!(
                "beta {beta} is below the certified bound {}",
                self.beta
            )));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn a(&self) -> &LinearMap {
        &self.a
    }
    pub fn fidelity(&self) -> &SmoothFidelity {
        &self.f
    }
    pub fn regularizer(&self) -> &GmeRegularizer {
        &self.reg
    }
    pub fn c_map(&self) -> &LinearMap {
        &self.c_map
    }
    pub fn c_set(&self) -> &ProxFunction {
        &self.c_set
    }
    pub fn mu(&self) -> f64 {
        self.reg.mu()
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn grad_lip(&self) -> f64 {
        self.grad_lip
    }
    pub fn norms(&self) -> ProblemNorms {
        self.norms
    }
    /// A point `x` with `𝔠x ∈ C` found at construction.
    pub fn feasible_point(&self) -> &[f64] {
        &self.feasible_point
    }

    /// Dimensions `(X, Z, 𝔷)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.in_dim(), self.reg.l().out_dim(), self.c_map.out_dim())
    }

    /// `∇𝔡(x) = A*∇f(Ax) − μ𝔏*B*B𝔏x`.
    pub fn grad_d(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("grad_d", self.a.in_dim(), x.len())?;
        let mut g = self.a.eval_adjoint(&self.f.grad_unchecked(&self.a.eval(x)));
        if !self.b_is_zero {
            let bbx = self.bl.eval_adjoint(&self.bl.eval(x));
            axpy(-self.mu(), &bbx, &mut g);
        }
        Ok(g)
    }

    /// `𝔡(x) = f(Ax) − (μ/2)‖B𝔏x‖²`.
    pub fn d_value(&self, x: &[f64]) -> Result<f64> {
        check_dim("d_value", self.a.in_dim(), x.len())?;
        let fx = self.f.value(&self.a.eval(x))?;
        Ok(fx - 0.5 * self.mu() * norm_sq(&self.bl.eval(x)))
    }

    /// `J(x) = f(Ax) + μΨ_B(𝔏x)` (constraint not included). The second
    /// component reports whether the inner minimization converged.
    pub fn objective(&self, x: &[f64], tol: f64) -> Result<(f64, bool)> {
        check_dim("objective", self.a.in_dim(), x.len())?;
        let fx = self.f.value(&self.a.eval(x))?;
        let g = gme_value(&self.reg, &self.reg.l().eval(x), tol)?;
        Ok((fx + self.mu() * g.value, g.converged))
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        let cx = self.c_map.eval(x);
        match &self.c_set {
            ProxFunction::IndicatorBox { lower, upper } => cx
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            ProxFunction::L1Norm { .. } => false,
        }
    }
}

fn is_isometry(l: &LinearMap) -> bool {
    use crate::linops::MapKind;
    matches!(l.kind(), MapKind::Identity | MapKind::Dct | MapKind::InverseDct)
}

fn find_feasible_point(c_map: &LinearMap, c_set: &ProxFunction) -> Result<Vec<f64>> {
    let n = c_map.in_dim();
    let zero = vec![0.0; n];
    if c_set.value(&c_map.eval(&zero))? == 0.0 {
        return Ok(zero);
    }
    let target = c_set.prox(1.0, &vec![0.0; c_set.dim()])?;
    let candidate = if c_map.is_identity() {
        target
    } else if n <= DENSE_CAP && c_map.out_dim() <= DENSE_CAP {
        let dense = c_map.to_dense(DENSE_CAP)?;
        let pinv = dense
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidInput(format!("pseudo-inverse failed: {e}")))?;
        (pinv * nalgebra::DVector::from_vec(target)).as_slice().to_vec()
    } else {
        return Err(Error::InvalidInput("could not certify a feasible point".into()));
    };
    let cx = c_map.eval(&candidate);
    let ok = match c_set {
        ProxFunction::IndicatorBox { lower, upper } => cx
            .iter()
            .zip(lower.iter().zip(upper))
            .all(|(v, (l, u))| *v >= l - 1e-9 && *v <= u + 1e-9),
        ProxFunction::L1Norm { .. } => false,
    };
    if ok {
        Ok(candidate)
    } else {
        Err(Error::InvalidInput(
            "could not certify a feasible point: constraint preimage may be empty".into(),
        ))
    }
}

/// Step parameters `(ρ, σ, τ)` and the averagedness constant `θ`; `T` is
/// `2/(4 − θ)`-averaged in the `𝔓` metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepParams {
    pub rho: f64,
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
}

impl StepParams {
    /// `σ`-bound right-hand side for a given `τ`:
    /// `μ‖𝔏*𝔏+𝔠*𝔠‖ + (2ρμ²‖B*B𝔏‖² + τ)/(2ρτ − 1)`.
    pub fn sigma_bound(p: &NrcProblem, rho: f64, tau: f64) -> f64 {
        let mu = p.mu();
        let n = p.norms;
        mu * n.lc + (2.0 * rho * mu * mu * n.bbl_sq + tau) / (2.0 * rho * tau - 1.0)
    }

    /// `θ = (σ + τ − μℓ)/(ρ(στ − τμℓ − μ²‖B*B𝔏‖²))` with `ℓ = ‖𝔏*𝔏+𝔠*𝔠‖`.
    pub fn theta_of(p: &NrcProblem, rho: f64, sigma: f64, tau: f64) -> f64 {
        let mu = p.mu();
        let n = p.norms;
        (sigma + tau - mu * n.lc) / (rho * (sigma * tau - tau * mu * n.lc - mu * mu * n.bbl_sq))
    }

    /// Builds and validates parameters for an explicit `(σ, τ)`.
    pub fn new(p: &NrcProblem, sigma: f64, tau: f64) -> Result<Self> {
        let rho = compute_rho(p);
        let s = StepParams {
            rho,
            sigma,
            tau,
            theta: Self::theta_of(p, rho, sigma, tau),
        };
        s.validate(p)?;
        Ok(s)
    }

    pub fn validate(&self, p: &NrcProblem) -> Result<()> {
        if !(self.tau > 1.0 / (2.0 * self.rho)) {
            return Err(Error::ParameterSelection(format!(
                "tau {} must exceed 1/(2 rho) = {}",
                self.tau,
                1.0 / (2.0 * self.rho)
            )));
        }
        let bound = Self::sigma_bound(p, self.rho, self.tau);
        if !(self.sigma > bound) {
            return Err(Error::ParameterSelection(format!(
                "sigma {} must exceed {bound}",
                self.sigma
            )));
        }
        if !(self.theta > 0.0 && self.theta < 2.0) {
            return Err(Error::ParameterSelection(format!("theta {} outside (0, 2)", self.theta)));
        }
        // Schur complement of the positive diagonal blocks of 𝔓:
        // σ > μ²‖B*B𝔏‖²/τ + μ‖𝔏*𝔏+𝔠*𝔠‖ is sufficient for 𝔓 ≻ 0.
        let mu = p.mu();
        let schur = self.sigma - mu * mu * p.norms.bbl_sq / self.tau - mu * p.norms.lc;
        if !(schur > 0.0) {
            return Err(Error::ParameterSelection("metric P is not positive definite".into()));
        }
        Ok(())
    }
}

/// `ρ = 1/max(β, μ‖B‖²)`.
pub fn compute_rho(p: &NrcProblem) -> f64 {
    1.0 / p.beta.max(p.mu() * p.norms.b_sq)
}

/// `τ = κ/(2ρ)` and `σ = 1.001 ×` the `σ`-bound.
pub fn choose_sigma_tau(p: &NrcProblem, kappa: f64) -> Result<StepParams> {
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidInput(format!("kappa must exceed 1, got {kappa}")));
    }
    let rho = compute_rho(p);
    let tau = kappa / (2.0 * rho);
    let sigma = SIGMA_FACTOR * StepParams::sigma_bound(p, rho, tau);
    let s = StepParams {
        rho,
        sigma,
        tau,
        theta: StepParams::theta_of(p, rho, sigma, tau),
    };
    s.validate(p)?;
    Ok(s)
}

/// A point `h = (x, v, w, z)` of the product space.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub iteration: usize,
    /// `‖h_k − h_{k−1}‖²_H` of the step that produced this state.
    pub residual_sq: f64,
}

impl SolverState {
    pub fn zeros(p: &NrcProblem) -> Self {
        let (nx, nz, nc) = p.dims();
        SolverState {
            x: vec![0.0; nx],
            v: vec![0.0; nz],
            w: vec![0.0; nz],
            z: vec![0.0; nc],
            iteration: 0,
            residual_sq: f64::INFINITY,
        }
    }

    pub fn check_dims(&self, p: &NrcProblem) -> Result<()> {
        let (nx, nz, nc) = p.dims();
        check_dim("state x", nx, self.x.len())?;
        check_dim("state v", nz, self.v.len())?;
        check_dim("state w", nz, self.w.len())?;
        check_dim("state z", nc, self.z.len())
    }

    /// `‖self − other‖²_H`.
    pub fn dist_sq(&self, other: &SolverState) -> f64 {
        dist_sq(&self.x, &other.x)
            + dist_sq(&self.v, &other.v)
            + dist_sq(&self.w, &other.w)
            + dist_sq(&self.z, &other.z)
    }

    fn difference(&self, other: &SolverState) -> SolverState {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p - q).collect();
        SolverState {
            x: d(&self.x, &other.x),
            v: d(&self.v, &other.v),
            w: d(&self.w, &other.w),
            z: d(&self.z, &other.z),
            iteration: 0,
            residual_sq: 0.0,
        }
    }
}

/// `⟨h, 𝔓h⟩` by block application.
pub fn p_norm_sq(p: &NrcProblem, s: &StepParams, h: &SolverState) -> Result<f64> {
    h.check_dims(p)?;
    Ok(p_norm_sq_unchecked(p, s, h))
}

fn p_norm_sq_unchecked(p: &NrcProblem, s: &StepParams, h: &SolverState) -> f64 {
    let mu = p.mu();
    let l = p.reg.l();
    let mut q = s.sigma * norm_sq(&h.x) + s.tau * norm_sq(&h.v) + mu * norm_sq(&h.w) + mu * norm_sq(&h.z);
    if !p.b_is_zero {
        q -= 2.0 * mu * dot(&p.bl.eval(&h.x), &p.reg.b().eval(&h.v));
    }
    q -= 2.0 * mu * dot(&l.eval(&h.x), &h.w);
    q -= 2.0 * mu * dot(&p.c_map.eval(&h.x), &h.z);
    q
}

/// Dense `𝔓` on `H` for diagnostics.
pub fn p_matrix_dense(p: &NrcProblem, s: &StepParams) -> Result<DMatrix<f64>> {
    let (nx, nz, nc) = p.dims();
    let total = nx + 2 * nz + nc;
    if total > DENSE_CAP {
        return Err(Error::DiagnosticUnavailable(format!(
            "dense P would be {total}x{total} (cap {DENSE_CAP})"
        )));
    }
    let mu = p.mu();
    let l = p.reg.l().to_dense(DENSE_CAP)?;
    let b = p.reg.b().to_dense(DENSE_CAP)?;
    let c = p.c_map.to_dense(DENSE_CAP)?;
    let btbl = b.transpose() * &b * &l;
    let mut m = DMatrix::zeros(total, total);
    let (ox, ov, ow, oz) = (0, nx, nx + nz, nx + 2 * nz);
    m.view_mut((ox, ox), (nx, nx)).fill_with_identity();
    m.view_mut((ox, ox), (nx, nx)).scale_mut(s.sigma);
    m.view_mut((ov, ov), (nz, nz)).fill_with_identity();
    m.view_mut((ov, ov), (nz, nz)).scale_mut(s.tau);
    m.view_mut((ow, ow), (nz, nz)).fill_with_identity();
    m.view_mut((ow, ow), (nz, nz)).scale_mut(mu);
    m.view_mut((oz, oz), (nc, nc)).fill_with_identity();
    m.view_mut((oz, oz), (nc, nc)).scale_mut(mu);
    m.view_mut((ov, ox), (nz, nx)).copy_from(&(&btbl * -mu));
    m.view_mut((ox, ov), (nx, nz)).copy_from(&(btbl.transpose() * -mu));
    m.view_mut((ow, ox), (nz, nx)).copy_from(&(&l * -mu));
    m.view_mut((ox, ow), (nx, nz)).copy_from(&(l.transpose() * -mu));
    m.view_mut((oz, ox), (nc, nx)).copy_from(&(&c * -mu));
    m.view_mut((ox, oz), (nx, nc)).copy_from(&(c.transpose() * -mu));
    Ok(m)
}

/// Smallest eigenvalue of the dense `𝔓`.
pub fn p_min_eigenvalue(p: &NrcProblem, s: &StepParams) -> Result<f64> {
    let m = p_matrix_dense(p, s)?;
    Ok(SymmetricEigen::new(m).eigenvalues.min())
}

/// One application of `T`.
pub fn apply_t(p: &NrcProblem, s: &StepParams, h: &SolverState) -> Result<SolverState> {
    h.check_dims(p)?;
    Ok(apply_t_unchecked(p, s, h))
}

fn apply_t_unchecked(p: &NrcProblem, s: &StepParams, h: &SolverState) -> SolverState {
    let mu = p.mu();
    let l = p.reg.l();
    let b = p.reg.b();

    // ξ = x − (1/σ)[A*∇f(Ax) + μ𝔏*B*(Bv − B𝔏x) + μ𝔏*w + μ𝔠*z]
    let mut g = p.a.eval_adjoint(&p.f.grad_unchecked(&p.a.eval(&h.x)));
    let (blx, bv) = if p.b_is_zero {
        (Vec::new(), Vec::new())
    } else {
        let blx = p.bl.eval(&h.x);
        let bv = b.eval(&h.v);
        let diff: Vec<f64> = bv.iter().zip(&blx).map(|(a, c)| a - c).collect();
        axpy(mu, &p.bl.eval_adjoint(&diff), &mut g);
        (blx, bv)
    };
    axpy(mu, &l.eval_adjoint(&h.w), &mut g);
    axpy(mu, &p.c_map.eval_adjoint(&h.z), &mut g);
    let mut xi = h.x.clone();
    axpy(-1.0 / s.sigma, &g, &mut xi);

    // ζ = Prox_{(μ/τ)Ψ}[v + (μ/τ)B*(2B𝔏ξ − B𝔏x − Bv)]
    let mut zeta = h.v.clone();
    if !p.b_is_zero {
        let blxi = p.bl.eval(&xi);
        let t: Vec<f64> = blxi
            .iter()
            .zip(&blx)
            .zip(&bv)
            .map(|((a, c), d)| 2.0 * a - c - d)
            .collect();
        axpy(mu / s.tau, &b.eval_adjoint(&t), &mut zeta);
    }
    p.reg.psi().prox_in_place(mu / s.tau, &mut zeta);

    // η = (Id − Prox_Ψ)(2𝔏ξ − 𝔏x + w)
    let lx = l.eval(&h.x);
    let lxi = l.eval(&xi);
    let r: Vec<f64> = lxi
        .iter()
        .zip(&lx)
        .zip(&h.w)
        .map(|((a, c), w)| 2.0 * a - c + w)
        .collect();
    let mut pr = r.clone();
    p.reg.psi().prox_in_place(1.0, &mut pr);
    let eta: Vec<f64> = r.iter().zip(&pr).map(|(a, c)| a - c).collect();

    // ς = (Id − P_C)(2𝔠ξ − 𝔠x + z)
    let cx = p.c_map.eval(&h.x);
    let cxi = p.c_map.eval(&xi);
    let q: Vec<f64> = cxi
        .iter()
        .zip(&cx)
        .zip(&h.z)
        .map(|((a, c), z)| 2.0 * a - c + z)
        .collect();
    let mut pq = q.clone();
    p.c_set.prox_in_place(1.0, &mut pq);
    let varsigma: Vec<f64> = q.iter().zip(&pq).map(|(a, c)| a - c).collect();

    let mut next = SolverState {
        x: xi,
        v: zeta,
        w: eta,
        z: varsigma,
        iteration: h.iteration + 1,
        residual_sq: 0.0,
    };
    next.residual_sq = next.dist_sq(h);
    next
}

#[derive(Clone, Copy, Debug)]
pub struct KmOptions {
    pub tol_sq: f64,
    pub max_iter: usize,
    /// Record `‖h_k − h_{k−1}‖²` in both the `H` and `𝔓` norms every step.
    pub trace: bool,
    /// Also log `J(x_k)` every this many iterations (only with `trace`).
    pub objective_every: Option<usize>,
}

impl Default for KmOptions {
    fn default() -> Self {
        KmOptions {
            tol_sq: DEFAULT_TOL_SQ,
            max_iter: DEFAULT_MAX_ITER,
            trace: false,
            objective_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual_sq_h: f64,
    pub residual_sq_p: f64,
    pub objective: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct KmOutcome {
    /// `Ξ(h_final)`.
    pub x: Vec<f64>,
    pub state: SolverState,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Krasnosel'skiĭ–Mann iteration `h_{k+1} = T(h_k)` until
/// `‖h_k − h_{k−1}‖²_H < tol_sq` or `max_iter` steps.
pub fn km_solve(p: &NrcProblem, s: &StepParams, h0: SolverState, opts: &KmOptions) -> Result<KmOutcome> {
    if !(opts.tol_sq > 0.0) {
        return Err(Error::InvalidInput("tol_sq must be positive".into()));
    }
    h0.check_dims(p)?;
    let mut h = h0;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let next = apply_t_unchecked(p, s, &h);
        if opts.trace {
            let residual_sq_p = p_norm_sq_unchecked(p, s, &next.difference(&h));
            let objective = match opts.objective_every {
                Some(every) if every > 0 && next.iteration % every == 0 => {
                    Some(p.objective(&next.x, OBJECTIVE_TOL)?.0)
                }
                _ => None,
            };
            trace.push(TraceRow {
                iteration: next.iteration,
                residual_sq_h: next.residual_sq,
                residual_sq_p,
                objective,
            });
        }
        h = next;
        if h.residual_sq < opts.tol_sq {
            converged = true;
            break;
        }
    }
    Ok(KmOutcome {
        x: h.x.clone(),
        iterations: h.iteration,
        state: h,
        converged,
        trace,
    })
}

/// Solves with default parameter selection (`κ`) from `h₀ = 0`.
pub fn solve(p: &NrcProblem, kappa: f64, opts: &KmOptions) -> Result<(StepParams, KmOutcome)> {
    let s = choose_sigma_tau(p, kappa)?;
    let out = km_solve(p, &s, SolverState::zeros(p), opts)?;
    Ok((s, out))
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::InvalidInput(format!("{other:?}")),
    })?;
    w.write_record(["iteration", "residual_sq_H", "residual_sq_P", "objective"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.residual_sq_h),
            format!("{:e}", r.residual_sq_p),
            r.objective.map(|v| format!("{v:e}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Outcome of one sufficient condition for existence of a minimizer.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Holds,
    DoesNotHold(String),
    NotCheckable(String),
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExistenceReport {
    /// Coercive `f` and an asymptotically multipolyhedral constraint set.
    pub multipolyhedral: Verdict,
    /// Bounded constraint set.
    pub bounded: Verdict,
    /// Coercive `f` and `null A ∩ null 𝔏 = {0}`.
    pub coercive_null: Verdict,
    pub warnings: Vec<String>,
}

impl ExistenceReport {
    pub fn certified(&self) -> bool {
        self.multipolyhedral.holds() || self.bounded.holds() || self.coercive_null.holds()
    }
}

/// Checks which sufficient condition for existence of a minimizer holds.
pub fn existence_diagnostics(p: &NrcProblem) -> ExistenceReport {
    let coercive = p.f.is_coercive();

    let bounded = if p.c_set.is_bounded_box() {
        if p.c_map.is_identity() {
            Verdict::Holds
        } else {
            match null_intersection_trivial(&p.c_map, &p.c_map, 1e-12) {
                Ok(true) => Verdict::Holds,
                Ok(false) => Verdict::NotCheckable(
                    "constraint map has a nontrivial kernel; boundedness of the preimage not decided".into(),
                ),
                Err(e) => Verdict::NotCheckable(e.to_string()),
            }
        }
    } else if p.c_set.is_whole_space() {
        Verdict::DoesNotHold("constraint set is the whole space".into())
    } else {
        Verdict::NotCheckable("constraint box is unbounded".into())
    };

    let coercive_null = if !coercive {
        Verdict::DoesNotHold("fidelity is not coercive".into())
    } else {
        match null_intersection_trivial(&p.a, p.reg.l(), 1e-12) {
            Ok(true) => Verdict::Holds,
            Ok(false) => Verdict::DoesNotHold("null A and null L intersect nontrivially".into()),
            Err(e) => Verdict::NotCheckable(e.to_string()),
        }
    };

    // The preimage of a box under a linear map is polyhedral, and the whole
    // space is the special case of an unconstrained box.
    let multipolyhedral = if !coercive {
        Verdict::DoesNotHold("fidelity is not coercive".into())
    } else if p.c_set.is_whole_space() || matches!(p.c_set, ProxFunction::IndicatorBox { .. }) {
        Verdict::Holds
    } else {
        Verdict::NotCheckable("constraint set is not recognized as polyhedral".into())
    };

    let mut warnings = Vec::new();
    let report = ExistenceReport {
        multipolyhedral,
        bounded,
        coercive_null,
        warnings: Vec::new(),
    };
    if !report.certified() {
        warnings.push("no sufficient condition for existence of a minimizer could be certified".into());
    }
    ExistenceReport { warnings, ..report }
}
