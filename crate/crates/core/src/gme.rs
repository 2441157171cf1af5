//! Generalized Moreau enhancement `Ψ_B` of an ℓ1 seed, the curvature-floor
//! design of `B`, and the overall-convexity certificate
//! `A*ΛA − μ𝔏*B*B𝔏 ⪰ O`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::linops::{LinearMap, DENSE_CAP};
use crate::proxlib::{moreau_inner_min, ProxFunction};

/// Default margin `c` in `B = √(c/μ)·√Λ·𝔏⁻¹`.
pub const DEFAULT_MARGIN: f64 = 0.99;
/// Iteration cap of the inner minimization used by [`gme_value`].
pub const INNER_MAX_ITER: usize = 1_000_000;

/// The triple `(Ψ, 𝔏, B)` together with the weight `μ`.
#[derive(Clone, Debug)]
pub struct GmeRegularizer {
    psi: ProxFunction,
    l: LinearMap,
    b: LinearMap,
    mu: f64,
}

impl GmeRegularizer {
    pub fn new(psi: ProxFunction, l: LinearMap, b: LinearMap, mu: f64) -> Result<Self> {
        if !matches!(psi, ProxFunction::L1Norm { .. }) {
            return Err(Error::InvalidInput("the GME seed must be the l1 norm".into()));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
        }
        check_dim("GME seed vs L", l.out_dim(), psi.dim())?;
        check_dim("GME B vs L", l.out_dim(), b.in_dim())?;
        Ok(GmeRegularizer { psi, l, b, mu })
    }

    /// `μ‖𝔏·‖₁` (the convex model, `B = 0`).
    pub fn convex(l: LinearMap, mu: f64) -> Result<Self> {
        let z = l.out_dim();
        Self::new(ProxFunction::l1(z), l, LinearMap::zero(z), mu)
    }

    /// Accepts a user-supplied `B` only if it passes
    /// [`overall_convexity_check`] against `A` and the curvature floor.
    pub fn with_validated_b(
        l: LinearMap,
        b: LinearMap,
        mu: f64,
        a: &LinearMap,
        lambda_diag: &[f64],
        tol: f64,
    ) -> Result<Self> {
        let reg = Self::new(ProxFunction::l1(l.out_dim()), l, b, mu)?;
        let report = overall_convexity_check(a, lambda_diag, &reg, tol)?;
        if !report.pass {
            return Err(Error::InvalidInput(format!(
                "user-supplied B violates the overall convexity condition (min eigenvalue {:.3e})",
                report.min_eig
            )));
        }
        Ok(reg)
    }

    pub fn psi(&self) -> &ProxFunction {
        &self.psi
    }
    pub fn l(&self) -> &LinearMap {
        &self.l
    }
    pub fn b(&self) -> &LinearMap {
        &self.b
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// `B = √(c/μ)·diag(√Λ)·𝔏⁻¹`, which makes `μ𝔏*B*B𝔏 = cΛ`.
pub fn design_b_invertible(l_inv: &LinearMap, lambda_diag: &[f64], mu: f64, c: f64) -> Result<LinearMap> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidInput(format!("margin c must lie in (0,1), got {c}")));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
    }
    if lambda_diag.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("curvature floor must be finite and nonnegative".into()));
    }
    check_dim("design_b_invertible", l_inv.out_dim(), lambda_diag.len())?;
    if lambda_diag.iter().all(|v| *v == 0.0) {
        return Ok(LinearMap::zero(l_inv.in_dim()));
    }
    let root = LinearMap::diagonal(lambda_diag.iter().map(|v| v.sqrt()).collect())?;
    Ok(LinearMap::scaled((c / mu).sqrt(), LinearMap::compose(&root, l_inv)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityReport {
    pub pass: bool,
    pub min_eig: f64,
}

/// Smallest eigenvalue of `M = A*ΛA − μ𝔏*B*B𝔏`; passes when `≥ −tol`.
pub fn overall_convexity_check(
    a: &LinearMap,
    lambda_diag: &[f64],
    reg: &GmeRegularizer,
    tol: f64,
) -> Result<ConvexityReport> {
    check_dim("convexity check A vs L", reg.l.in_dim(), a.in_dim())?;
    check_dim("convexity check Λ", a.out_dim(), lambda_diag.len())?;
    let bl = LinearMap::compose(&reg.b, &reg.l)?;

    // Structurally diagonal case: M is diagonal and its spectrum is exact.
    if let (Some(ad), Some(bd)) = (a.diagonal_entries(), bl.diagonal_entries()) {
        let min_eig = ad
            .iter()
            .zip(&bd)
            .zip(lambda_diag)
            .map(|((av, bv), lam)| av * lam * av - reg.mu * bv * bv)
            .fold(f64::INFINITY, f64::min);
        return Ok(ConvexityReport {
            pass: min_eig >= -tol,
            min_eig,
        });
    }

    let n = a.in_dim();
    if n > DENSE_CAP {
        return Err(Error::DiagnosticUnavailable(format!(
            "convexity check needs a dense {n}x{n} matrix (cap {DENSE_CAP})"
        )));
    }
    let da = a.to_dense(usize::MAX)?;
    let dbl = bl.to_dense(usize::MAX)?;
    let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(lambda_diag));
    let m = da.transpose() * lam * &da - (dbl.transpose() * &dbl) * reg.mu;
    let sym = (&m + m.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    Ok(ConvexityReport {
        pass: min_eig >= -tol,
        min_eig,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmeValue {
    pub value: f64,
    /// False when the inner minimization hit its iteration cap; the value is
    /// then approximate.
    pub converged: bool,
}

/// `Ψ_B(z) = Ψ(z) − min_v [Ψ(v) + ½‖B(z − v)‖²]`, accurate to `O(tol)`.
pub fn gme_value(reg: &GmeRegularizer, z: &[f64], tol: f64) -> Result<GmeValue> {
    check_dim("gme_value", reg.psi.dim(), z.len())?;
    let seed = reg.psi.value(z)?;
    let inner = moreau_inner_min(&reg.psi, &reg.b, z, tol, INNER_MAX_ITER)?;
    Ok(GmeValue {
        value: seed - inner.value,
        converged: inner.converged,
    })
}
