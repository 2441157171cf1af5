//! Separable smooth convex data-fidelity functions.
//!
//! Three kinds are provided: the quadratic `½‖y − u‖²`, the clipped-Gaussian
//! negative log-likelihood (quadratic on unsaturated samples, a Gaussian
//! log-tail on samples saturated at `±ϑ`), and the quadratic extension of
//! either outside a box `Π`, which keeps the values on `Π` and makes the
//! gradient globally Lipschitz.

pub mod gauss_tail;

use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};
use crate::proxlib::ProxFunction;

/// Grid spacing used when scanning `f″ᵢ` over an interval.
pub const CURVATURE_GRID: f64 = 1e-3;
/// Tolerance used when classifying externally loaded observations as clipped.
pub const CLIP_DETECT_TOL: f64 = 1e-12;

/// Per-coordinate closed box `⨉[lowerᵢ, upperᵢ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidInput("box bounds must be nonempty and equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidInput("empty box: lower > upper".into()));
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, h))| v >= l && v <= h)
    }

    pub fn to_indicator(&self) -> ProxFunction {
        ProxFunction::IndicatorBox {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowKind {
    Interior,
    UpperClip,
    LowerClip,
}

#[derive(Clone, Debug)]
pub struct ClippedGaussian {
    y: Vec<f64>,
    s: f64,
    theta: f64,
    rows: Vec<RowKind>,
}

impl ClippedGaussian {
    pub fn observation(&self) -> &[f64] {
        &self.y
    }
    pub fn noise_std(&self) -> f64 {
        self.s
    }
    pub fn clip_level(&self) -> f64 {
        self.theta
    }
    pub fn row_kinds(&self) -> &[RowKind] {
        &self.rows
    }

    /// `(fᵢ, fᵢ′, fᵢ″)` at `r`.
    fn row(&self, i: usize, r: f64) -> (f64, f64, f64) {
        let s = self.s;
        match self.rows[i] {
            RowKind::Interior => {
                let d = (r - self.y[i]) / s;
                (0.5 * d * d, d / s, 1.0 / (s * s))
            }
            RowKind::UpperClip => {
                let z = (self.theta - r) / s;
                let (v, h, hs) = tail_terms(z, s);
                (v, -h / s, hs / (s * s))
            }
            RowKind::LowerClip => {
                let z = (self.theta + r) / s;
                let (v, h, hs) = tail_terms(z, s);
                (v, h / s, hs / (s * s))
            }
        }
    }
}

/// `(−ln(s·√(2π)·Q(z)), h(z), h′(z))`.
fn tail_terms(z: f64, s: f64) -> (f64, f64, f64) {
    let value = -s.ln() - 0.5 * (2.0 * PI).ln() - gauss_tail::ln_q(z);
    (value, gauss_tail::hazard(z), gauss_tail::hazard_slope(z))
}

/// Quadratic extension of a base fidelity outside `Π`:
/// `f̃ᵢ(r) = fᵢ″(c)/2·(r − c)² + fᵢ′(c)(r − c) + fᵢ(c)` with `c = P_Πᵢ(r)`.
#[derive(Clone, Debug)]
pub struct Extended {
    base: Box<SmoothFidelity>,
    domain: BoxSet,
    /// `(f, f′, f″)` at the lower and upper endpoint of every row; unused for
    /// infinite endpoints.
    at_lower: Vec<(f64, f64, f64)>,
    at_upper: Vec<(f64, f64, f64)>,
    /// Curvature of the base over `domain`, computed once at construction.
    profile: CurvatureProfile,
}

impl Extended {
    pub fn base(&self) -> &SmoothFidelity {
        &self.base
    }
    pub fn domain(&self) -> &BoxSet {
        &self.domain
    }

    fn row(&self, i: usize, r: f64) -> (f64, f64, f64) {
        let (lo, hi) = (self.domain.lower[i], self.domain.upper[i]);
        let (c, (fc, d1, d2)) = if r < lo {
            (lo, self.at_lower[i])
        } else if r > hi {
            (hi, self.at_upper[i])
        } else {
            return self.base.row(i, r);
        };
        let t = r - c;
        (0.5 * d2 * t * t + d1 * t + fc, d2 * t + d1, d2)
    }
}

#[derive(Clone, Debug)]
pub enum SmoothFidelity {
    /// `½‖y − u‖²`.
    Quadratic { y: Vec<f64> },
    ClippedGaussianNll(ClippedGaussian),
    Extended(Extended),
}

/// Diagonal curvature floor `Λ` and a Lipschitz bound for `∇f`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureProfile {
    pub lambda_diag: Vec<f64>,
    pub grad_lip: f64,
}

impl SmoothFidelity {
    pub fn quadratic(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observation must be nonempty and finite".into()));
        }
        Ok(SmoothFidelity::Quadratic { y })
    }

    /// Clipped-Gaussian NLL for an observation produced by the clip operator;
    /// rows with `|yᵢ| = ϑ` exactly are the saturated ones.
    pub fn clipped_gaussian(y: Vec<f64>, s: f64, theta: f64) -> Result<Self> {
        Self::clipped_with(y, s, theta, 0.0)
    }

    /// As [`SmoothFidelity::clipped_gaussian`] for external data: rows with
    /// `|yᵢ| ≥ ϑ − 1e−12` count as saturated and are snapped to `±ϑ`.
    pub fn clipped_gaussian_tolerant(y: Vec<f64>, s: f64, theta: f64) -> Result<Self> {
        Self::clipped_with(y, s, theta, CLIP_DETECT_TOL)
    }

    fn clipped_with(mut y: Vec<f64>, s: f64, theta: f64, tol: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidInput(format!("noise std must be positive, got {s}")));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidInput(format!("clip level must be positive, got {theta}")));
        }
        if y.is_empty() {
            return Err(Error::InvalidInput("empty observation".into()));
        }
        let mut rows = Vec::with_capacity(y.len());
        for (i, v) in y.iter_mut().enumerate() {
            if !v.is_finite() || v.abs() > theta + tol {
                return Err(Error::InvalidInput(format!(
                    "observation y[{i}] = {v} lies outside [-{theta}, {theta}]"
                )));
            }
            let kind = if *v >= theta - tol {
                *v = theta;
                RowKind::UpperClip
            } else if *v <= -theta + tol {
                *v = -theta;
                RowKind::LowerClip
            } else {
                RowKind::Interior
            };
            rows.push(kind);
        }
        Ok(SmoothFidelity::ClippedGaussianNll(ClippedGaussian { y, s, theta, rows }))
    }

    /// Quadratic extension outside `pi`; the result agrees with `self` on `pi`.
    pub fn build_extension(&self, pi: &BoxSet) -> Result<Self> {
        check_dim("build_extension", self.dim(), pi.dim())?;
        if pi.lower.iter().zip(&pi.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidInput("extension box is empty".into()));
        }
        let base = match self {
            SmoothFidelity::Extended(_) => {
                return Err(Error::InvalidInput("fidelity is already extended".into()))
            }
            other => other.clone(),
        };
        let m = self.dim();
        let endpoint = |i: usize, c: f64| {
            if c.is_finite() {
                base.row(i, c)
            } else {
                (0.0, 0.0, 0.0)
            }
        };
        let at_lower = (0..m).map(|i| endpoint(i, pi.lower[i])).collect();
        let at_upper = (0..m).map(|i| endpoint(i, pi.upper[i])).collect();
        let profile = base.curvature_profile(Some(pi))?;
        Ok(SmoothFidelity::Extended(Extended {
            base: Box::new(base),
            domain: pi.clone(),
            at_lower,
            at_upper,
            profile,
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            SmoothFidelity::Quadratic { y } => y.len(),
            SmoothFidelity::ClippedGaussianNll(c) => c.y.len(),
            SmoothFidelity::Extended(e) => e.base.dim(),
        }
    }

    /// `(fᵢ(r), fᵢ′(r), fᵢ″(r))`.
    pub fn row(&self, i: usize, r: f64) -> (f64, f64, f64) {
        match self {
            SmoothFidelity::Quadratic { y } => (0.5 * (r - y[i]) * (r - y[i]), r - y[i], 1.0),
            SmoothFidelity::ClippedGaussianNll(c) => c.row(i, r),
            SmoothFidelity::Extended(e) => e.row(i, r),
        }
    }

    pub fn value(&self, u: &[f64]) -> Result<f64> {
        check_dim("fidelity value", self.dim(), u.len())?;
        Ok(u.iter().enumerate().map(|(i, r)| self.row(i, *r).0).sum())
    }

    pub fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim("fidelity grad", self.dim(), u.len())?;
        Ok(self.grad_unchecked(u))
    }

    pub(crate) fn grad_unchecked(&self, u: &[f64]) -> Vec<f64> {
        match self {
            SmoothFidelity::Quadratic { y } => u.iter().zip(y).map(|(r, v)| r - v).collect(),
            _ => u.iter().enumerate().map(|(i, r)| self.row(i, *r).1).collect(),
        }
    }

    /// Diagonal of `∇²f(u)`.
    pub fn hessian_diag(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim("fidelity hessian", self.dim(), u.len())?;
        Ok(u.iter().enumerate().map(|(i, r)| self.row(i, *r).2).collect())
    }

    /// True when every row tends to `+∞` in both directions.
    pub fn is_coercive(&self) -> bool {
        match self {
            SmoothFidelity::Quadratic { .. } => true,
            SmoothFidelity::ClippedGaussianNll(c) => c.rows.iter().all(|k| *k == RowKind::Interior),
            SmoothFidelity::Extended(e) => (0..e.base.dim()).all(|i| {
                let side = |c: f64, at: (f64, f64, f64), toward_plus: bool| {
                    if c.is_finite() {
                        at.2 > 0.0
                    } else {
                        // Unbounded side keeps the base row.
                        match e.base.as_ref() {
                            SmoothFidelity::ClippedGaussianNll(cg) => match cg.rows[i] {
                                RowKind::Interior => true,
                                RowKind::UpperClip => !toward_plus,
                                RowKind::LowerClip => toward_plus,
                            },
                            _ => true,
                        }
                    }
                };
                side(e.domain.lower[i], e.at_lower[i], false)
                    && side(e.domain.upper[i], e.at_upper[i], true)
            }),
        }
    }

    /// Curvature floor `Λᵢᵢ = inf fᵢ″` and `sup fᵢ″` over `domain` (all of `ℝ`
    /// when `None`).
    ///
    /// For the extended kind the profile is that of the base over `Π`, since
    /// `f̃ᵢ″` takes exactly the values of `fᵢ″` on `Πᵢ`; `domain` is ignored.
    pub fn curvature_profile(&self, domain: Option<&BoxSet>) -> Result<CurvatureProfile> {
        if let Some(d) = domain {
            check_dim("curvature_profile", self.dim(), d.dim())?;
        }
        let m = self.dim();
        match self {
            SmoothFidelity::Quadratic { .. } => Ok(CurvatureProfile {
                lambda_diag: vec![1.0; m],
                grad_lip: 1.0,
            }),
            SmoothFidelity::Extended(e) => Ok(e.profile.clone()),
            SmoothFidelity::ClippedGaussianNll(c) => {
                let full = 1.0 / (c.s * c.s);
                let mut memo: Vec<((RowKind, u64, u64), (f64, f64))> = Vec::new();
                let mut lambda = Vec::with_capacity(m);
                let mut lip: f64 = 0.0;
                for i in 0..m {
                    let (lo, hi) = domain.map_or((f64::NEG_INFINITY, f64::INFINITY), |d| {
                        (d.lower[i], d.upper[i])
                    });
                    let (inf, sup) = match c.rows[i] {
                        RowKind::Interior => (full, full),
                        kind => {
                            let key = (kind, lo.to_bits(), hi.to_bits());
                            match memo.iter().find(|(k, _)| *k == key) {
                                Some((_, v)) => *v,
                                None => {
                                    let v = clipped_row_range(c, i, lo, hi);
                                    memo.push((key, v));
                                    v
                                }
                            }
                        }
                    };
                    lambda.push(inf);
                    lip = lip.max(sup);
                }
                Ok(CurvatureProfile {
                    lambda_diag: lambda,
                    grad_lip: lip,
                })
            }
        }
    }
}

/// `(inf, sup)` of `fᵢ″` over `[lo, hi]` for a saturated row: endpoints plus a
/// `CURVATURE_GRID` scan of the finite part, with the limiting values `0` and
/// `1/s²` standing in for infinite endpoints.
fn clipped_row_range(c: &ClippedGaussian, i: usize, lo: f64, hi: f64) -> (f64, f64) {
    let full = 1.0 / (c.s * c.s);
    let upper = c.rows[i] == RowKind::UpperClip;
    let mut inf = f64::INFINITY;
    let mut sup: f64 = 0.0;
    let mut take = |v: f64| {
        inf = inf.min(v);
        sup = sup.max(v);
    };
    // f″ → 0 toward the unsaturated side, → 1/s² toward the saturated side.
    if lo == f64::NEG_INFINITY {
        take(if upper { full } else { 0.0 });
    }
    if hi == f64::INFINITY {
        take(if upper { 0.0 } else { full });
    }
    let window = 40.0 * c.s + c.theta;
    let (a, b) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo.max(window)),
        (false, true) => (hi.min(-window), hi),
        (false, false) => (-window, window),
    };
    let steps = ((b - a) / CURVATURE_GRID).ceil() as usize;
    for k in 0..=steps {
        let r = (a + k as f64 * CURVATURE_GRID).min(b);
        take(c.row(i, r).2);
    }
    take(c.row(i, b).2);
    (inf, sup)
}
