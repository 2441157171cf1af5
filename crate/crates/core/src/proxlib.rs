//! Prox-friendly seed functions, box projections, and the inner
//! minimization `min_v Ψ(v) + ½‖B(x − v)‖²` that defines the GME penalty.

use crate::error::{check_dim, Error, Result};
use crate::linops::LinearMap;
use crate::vector::norm_sq;

/// Absolute tolerance for box membership in [`ProxFunction::value`].
pub const BOX_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum ProxFunction {
    /// `Σ|xᵢ|` on `ℝᵈ`.
    L1Norm { dim: usize },
    /// Indicator of `⨉[lowerᵢ, upperᵢ]`; bounds may be infinite.
    IndicatorBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl ProxFunction {
    pub fn l1(dim: usize) -> Self {
        ProxFunction::L1Norm { dim }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidInput("box bounds must be nonempty and equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || l.is_nan() || u.is_nan()) {
            return Err(Error::InvalidInput("box needs lower <= upper per coordinate".into()));
        }
        Ok(ProxFunction::IndicatorBox { lower, upper })
    }

    /// `[lo, hi]ᵈ`.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            ProxFunction::L1Norm { dim } => *dim,
            ProxFunction::IndicatorBox { lower, .. } => lower.len(),
        }
    }

    /// True when the function is the indicator of a bounded box.
    pub fn is_bounded_box(&self) -> bool {
        match self {
            ProxFunction::IndicatorBox { lower, upper } => lower
                .iter()
                .chain(upper)
                .all(|v| v.is_finite()),
            ProxFunction::L1Norm { .. } => false,
        }
    }

    /// True when the function is the indicator of the whole space.
    pub fn is_whole_space(&self) -> bool {
        match self {
            ProxFunction::IndicatorBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .all(|(l, u)| *l == f64::NEG_INFINITY && *u == f64::INFINITY),
            ProxFunction::L1Norm { .. } => false,
        }
    }

    pub fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidInput(format!("prox needs gamma > 0, got {gamma}")));
        }
        check_dim("prox", self.dim(), x.len())?;
        let mut out = x.to_vec();
        self.prox_in_place(gamma, &mut out);
        Ok(out)
    }

    /// Unchecked in-place prox for hot loops; callers guarantee `gamma > 0`
    /// and matching dimension.
    pub(crate) fn prox_in_place(&self, gamma: f64, x: &mut [f64]) {
        match self {
            ProxFunction::L1Norm { .. } => {
                for v in x.iter_mut() {
                    *v = soft_threshold(*v, gamma);
                }
            }
            ProxFunction::IndicatorBox { lower, upper } => {
                for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(*l, *u);
                }
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim("value", self.dim(), x.len())?;
        Ok(match self {
            ProxFunction::L1Norm { .. } => x.iter().map(|v| v.abs()).sum(),
            ProxFunction::IndicatorBox { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (l, u))| *v >= l - BOX_TOL && *v <= u + BOX_TOL);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        })
    }
}

/// `sign(x)·max(|x| − γ, 0)`.
#[inline]
pub fn soft_threshold(x: f64, gamma: f64) -> f64 {
    if x > gamma {
        x - gamma
    } else if x < -gamma {
        x + gamma
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct InnerMin {
    pub v: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves `min_v Ψ(v) + ½‖B(x − v)‖²` for `Ψ = ‖·‖₁` by proximal gradient
/// with step `1/‖B‖²_op`, starting from `v = 0`. Stops once the
/// gradient-mapping norm `‖B‖²·‖v⁺ − v‖` falls below `tol`.
pub fn moreau_inner_min(
    psi: &ProxFunction,
    bmap: &LinearMap,
    x: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<InnerMin> {
    if !matches!(psi, ProxFunction::L1Norm { .. }) {
        return Err(Error::InvalidInput("inner minimization supports the l1 seed only".into()));
    }
    check_dim("moreau_inner_min", psi.dim(), bmap.in_dim())?;
    check_dim("moreau_inner_min", psi.dim(), x.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }

    let objective = |v: &[f64]| -> f64 {
        let d: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - b).collect();
        let l1: f64 = v.iter().map(|e| e.abs()).sum();
        l1 + 0.5 * norm_sq(&bmap.eval(&d))
    };

    let n = x.len();
    let lip = bmap.norm_sq_upper();
    if lip == 0.0 {
        // B = 0: the inner problem is min Ψ, attained at v = 0.
        return Ok(InnerMin {
            v: vec![0.0; n],
            value: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    let step = 1.0 / lip;
    let mut v = vec![0.0; n];
    for it in 1..=max_iter {
        let d: Vec<f64> = v.iter().zip(x).map(|(a, b)| a - b).collect();
        let grad = bmap.eval_adjoint(&bmap.eval(&d));
        let mut next: Vec<f64> = v.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
        psi.prox_in_place(step, &mut next);
        let moved: f64 = next.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        v = next;
        if lip * moved < tol {
            let value = objective(&v);
            return Ok(InnerMin {
                v,
                value,
                converged: true,
                iterations: it,
            });
        }
    }
    let value = objective(&v);
    Ok(InnerMin {
        v,
        value,
        converged: false,
        iterations: max_iter,
    })
}
