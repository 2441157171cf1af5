//! Linear operators between finite-dimensional real vector spaces.
//!
//! A [`LinearMap`] carries its dimensions and an exact adjoint. The concrete
//! kinds are dense matrices, the identity, diagonal scalings, the orthonormal
//! type-II DCT and its inverse, compositions and scalar multiples.
//! Composition performs light algebraic simplification (identities are
//! dropped, `DCT⁻¹ ∘ DCT` collapses, diagonals and scalars fold) so that maps
//! such as `B ∘ L` built from a DCT-based design evaluate cheaply.
//!
//! Operator norms are estimated by power iteration on `L*L` and are always
//! reported as upper estimates.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::vector::{dot, norm, norm_sq};

/// Dense materialization cap (columns) for SVD/eigen based diagnostics.
pub const DENSE_CAP: usize = 4096;

/// Iteration budget used for operator norms throughout the solver.
pub const NORM_ITERS: usize = 200;
/// Relative-change stopping tolerance used for operator norms.
pub const NORM_TOL: f64 = 1e-10;
/// Minimum multiplicative safety applied to every power-iteration estimate.
pub const NORM_SAFETY: f64 = 1e-6;

const POWER_SEED: u64 = 0x6d65_6e67_6e6f_726d;

/// Orthonormal DCT-II basis, stored in both orientations for cache-friendly
/// forward and inverse products.
struct DctBasis {
    m: usize,
    forward: Vec<f64>,
    inverse: Vec<f64>,
}

impl DctBasis {
    fn new(m: usize) -> Self {
        let mut forward = vec![0.0; m * m];
        let a0 = (1.0 / m as f64).sqrt();
        let ak = (2.0 / m as f64).sqrt();
        for k in 0..m {
            let alpha = if k == 0 { a0 } else { ak };
            for n in 0..m {
                forward[k * m + n] =
                    alpha * (PI * (2 * n + 1) as f64 * k as f64 / (2 * m) as f64).cos();
            }
        }
        let mut inverse = vec![0.0; m * m];
        for k in 0..m {
            for n in 0..m {
                inverse[n * m + k] = forward[k * m + n];
            }
        }
        DctBasis {
            m,
            forward,
            inverse,
        }
    }

    fn product(rows: &[f64], m: usize, x: &[f64]) -> Vec<f64> {
        rows.chunks_exact(m).map(|row| dot(row, x)).collect()
    }
}

impl fmt::Debug for DctBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DctBasis({})", self.m)
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Dense(Arc<DMatrix<f64>>),
    Identity,
    Diagonal(Arc<Vec<f64>>),
    Dct(Arc<DctBasis>),
    InverseDct(Arc<DctBasis>),
    /// `outer ∘ inner`; `inner` is applied first.
    Composition(Box<LinearMap>, Box<LinearMap>),
    Scaled(f64, Box<LinearMap>),
}

/// Public tag describing the concrete form of a [`LinearMap`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Dense,
    Identity,
    Diagonal,
    Dct,
    InverseDct,
    Composition,
    Scaled,
}

/// An immutable linear operator `L: ℝⁿ → ℝᵐ` with an exact adjoint.
#[derive(Clone, Debug)]
pub struct LinearMap {
    in_dim: usize,
    out_dim: usize,
    kind: Kind,
}

impl LinearMap {
    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "identity needs a positive dimension");
        LinearMap {
            in_dim: n,
            out_dim: n,
            kind: Kind::Identity,
        }
    }

    /// The zero map on `ℝⁿ`.
    pub fn zero(n: usize) -> Self {
        Self::scaled(0.0, Self::identity(n))
    }

    pub fn diagonal(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::InvalidInput("empty diagonal".into()));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite diagonal entry".into()));
        }
        Ok(LinearMap {
            in_dim: d.len(),
            out_dim: d.len(),
            kind: Kind::Diagonal(Arc::new(d)),
        })
    }

    pub fn dense(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() == 0 || mat.ncols() == 0 {
            return Err(Error::InvalidInput("empty dense matrix".into()));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(LinearMap {
            in_dim: mat.ncols(),
            out_dim: mat.nrows(),
            kind: Kind::Dense(Arc::new(mat)),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidInput("ragged matrix rows".into()));
        }
        Self::dense(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    /// Orthonormal type-II DCT on `ℝᵐ`.
    pub fn dct(m: usize) -> Self {
        assert!(m > 0, "dct needs a positive length");
        LinearMap {
            in_dim: m,
            out_dim: m,
            kind: Kind::Dct(Arc::new(DctBasis::new(m))),
        }
    }

    /// Inverse (equivalently, adjoint) of [`LinearMap::dct`].
    pub fn inverse_dct(m: usize) -> Self {
        Self::dct(m).adjoint()
    }

    pub fn scaled(c: f64, inner: LinearMap) -> Self {
        let (in_dim, out_dim) = (inner.in_dim, inner.out_dim);
        if c == 1.0 {
            return inner;
        }
        let kind = match inner.kind {
            Kind::Scaled(c2, l) => return Self::scaled(c * c2, *l),
            Kind::Diagonal(d) if c != 0.0 => Kind::Diagonal(Arc::new(d.iter().map(|v| c * v).collect())),
            other => Kind::Scaled(
                c,
                Box::new(LinearMap {
                    in_dim,
                    out_dim,
                    kind: other,
                }),
            ),
        };
        LinearMap {
            in_dim,
            out_dim,
            kind,
        }
    }

    /// `outer ∘ inner`. Fails when `outer.in_dim != inner.out_dim`.
    pub fn compose(outer: &LinearMap, inner: &LinearMap) -> Result<Self> {
        check_dim("compose", outer.in_dim, inner.out_dim)?;
        Ok(Self::compose_simplified(outer.clone(), inner.clone()))
    }

    fn compose_simplified(outer: LinearMap, inner: LinearMap) -> Self {
        let (in_dim, out_dim) = (inner.in_dim, outer.out_dim);
        match (outer.kind, inner.kind) {
            (Kind::Identity, k) => LinearMap {
                in_dim,
                out_dim,
                kind: k,
            },
            (k, Kind::Identity) => LinearMap {
                in_dim,
                out_dim,
                kind: k,
            },
            (Kind::Scaled(c, l), k) => Self::scaled(
                c,
                Self::compose_simplified(
                    *l,
                    LinearMap {
                        in_dim,
                        out_dim: inner.out_dim,
                        kind: k,
                    },
                ),
            ),
            (k, Kind::Scaled(c, l)) => Self::scaled(
                c,
                Self::compose_simplified(
                    LinearMap {
                        in_dim: outer.in_dim,
                        out_dim,
                        kind: k,
                    },
                    *l,
                ),
            ),
            (Kind::Dct(_), Kind::InverseDct(_)) | (Kind::InverseDct(_), Kind::Dct(_)) => {
                Self::identity(in_dim)
            }
            (Kind::Diagonal(a), Kind::Diagonal(b)) => LinearMap {
                in_dim,
                out_dim,
                kind: Kind::Diagonal(Arc::new(a.iter().zip(b.iter()).map(|(x, y)| x * y).collect())),
            },
            // Re-associate to the right so that adjacent factors can meet.
            (Kind::Composition(a, b), k) => {
                let rest = Self::compose_simplified(
                    *b,
                    LinearMap {
                        in_dim,
                        out_dim: inner.out_dim,
                        kind: k,
                    },
                );
                Self::compose_simplified(*a, rest)
            }
            (ko, Kind::Composition(c, d)) => {
                let o = LinearMap {
                    in_dim: outer.in_dim,
                    out_dim,
                    kind: ko,
                };
                if Self::reduces_with(&o, &c) {
                    let oc = Self::compose_simplified(o, *c);
                    Self::compose_simplified(oc, *d)
                } else {
                    LinearMap {
                        in_dim,
                        out_dim,
                        kind: Kind::Composition(
                            Box::new(o),
                            Box::new(LinearMap {
                                in_dim,
                                out_dim: c.out_dim,
                                kind: Kind::Composition(c, d),
                            }),
                        ),
                    }
                }
            }
            (ko, ki) => LinearMap {
                in_dim,
                out_dim,
                kind: Kind::Composition(
                    Box::new(LinearMap {
                        in_dim: outer.in_dim,
                        out_dim,
                        kind: ko,
                    }),
                    Box::new(LinearMap {
                        in_dim,
                        out_dim: outer.in_dim,
                        kind: ki,
                    }),
                ),
            },
        }
    }

    fn reduces_with(outer: &LinearMap, inner: &LinearMap) -> bool {
        matches!(
            (&outer.kind, &inner.kind),
            (Kind::Identity, _)
                | (_, Kind::Identity)
                | (Kind::Scaled(..), _)
                | (_, Kind::Scaled(..))
                | (Kind::Dct(_), Kind::InverseDct(_))
                | (Kind::InverseDct(_), Kind::Dct(_))
                | (Kind::Diagonal(_), Kind::Diagonal(_))
        )
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kind(&self) -> MapKind {
        match self.kind {
            Kind::Dense(_) => MapKind::Dense,
            Kind::Identity => MapKind::Identity,
            Kind::Diagonal(_) => MapKind::Diagonal,
            Kind::Dct(_) => MapKind::Dct,
            Kind::InverseDct(_) => MapKind::InverseDct,
            Kind::Composition(..) => MapKind::Composition,
            Kind::Scaled(..) => MapKind::Scaled,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Identity)
    }

    /// Structural zero test (exact, no numerical tolerance).
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            Kind::Scaled(c, l) => *c == 0.0 || l.is_zero(),
            Kind::Diagonal(d) => d.iter().all(|v| *v == 0.0),
            Kind::Dense(m) => m.iter().all(|v| *v == 0.0),
            Kind::Composition(a, b) => a.is_zero() || b.is_zero(),
            Kind::Identity | Kind::Dct(_) | Kind::InverseDct(_) => false,
        }
    }

    /// Diagonal entries when the map is structurally diagonal.
    pub fn diagonal_entries(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Identity => Some(vec![1.0; self.in_dim]),
            Kind::Diagonal(d) => Some(d.to_vec()),
            Kind::Scaled(c, l) => l
                .diagonal_entries()
                .map(|d| d.iter().map(|v| c * v).collect()),
            _ => None,
        }
    }

    /// `Lx`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("apply", self.in_dim, x.len())?;
        Ok(self.eval(x))
    }

    /// `L*y`.
    pub fn adjoint_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim("adjoint_apply", self.out_dim, y.len())?;
        Ok(self.eval_adjoint(y))
    }

    pub(crate) fn eval(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Identity => x.to_vec(),
            Kind::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            Kind::Dense(m) => {
                let mut out = vec![0.0; m.nrows()];
                // Column-major storage: accumulate column by column.
                for (j, col) in m.column_iter().enumerate() {
                    let xj = x[j];
                    if xj != 0.0 {
                        for (o, a) in out.iter_mut().zip(col.iter()) {
                            *o += a * xj;
                        }
                    }
                }
                out
            }
            Kind::Dct(b) => DctBasis::product(&b.forward, b.m, x),
            Kind::InverseDct(b) => DctBasis::product(&b.inverse, b.m, x),
            Kind::Composition(outer, inner) => outer.eval(&inner.eval(x)),
            Kind::Scaled(c, l) => {
                if *c == 0.0 {
                    vec![0.0; self.out_dim]
                } else {
                    let mut v = l.eval(x);
                    v.iter_mut().for_each(|e| *e *= c);
                    v
                }
            }
        }
    }

    pub(crate) fn eval_adjoint(&self, y: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Identity => y.to_vec(),
            Kind::Diagonal(d) => d.iter().zip(y).map(|(a, b)| a * b).collect(),
            Kind::Dense(m) => m.column_iter().map(|col| dot(col.as_slice(), y)).collect(),
            Kind::Dct(b) => DctBasis::product(&b.inverse, b.m, y),
            Kind::InverseDct(b) => DctBasis::product(&b.forward, b.m, y),
            Kind::Composition(outer, inner) => inner.eval_adjoint(&outer.eval_adjoint(y)),
            Kind::Scaled(c, l) => {
                if *c == 0.0 {
                    vec![0.0; self.in_dim]
                } else {
                    let mut v = l.eval_adjoint(y);
                    v.iter_mut().for_each(|e| *e *= c);
                    v
                }
            }
        }
    }

    /// The adjoint `L*` as a map in its own right.
    pub fn adjoint(&self) -> LinearMap {
        let kind = match &self.kind {
            Kind::Identity => Kind::Identity,
            Kind::Diagonal(d) => Kind::Diagonal(d.clone()),
            Kind::Dense(m) => Kind::Dense(Arc::new(m.transpose())),
            Kind::Dct(b) => Kind::InverseDct(b.clone()),
            Kind::InverseDct(b) => Kind::Dct(b.clone()),
            Kind::Composition(outer, inner) => {
                Kind::Composition(Box::new(inner.adjoint()), Box::new(outer.adjoint()))
            }
            Kind::Scaled(c, l) => Kind::Scaled(*c, Box::new(l.adjoint())),
        };
        LinearMap {
            in_dim: self.out_dim,
            out_dim: self.in_dim,
            kind,
        }
    }

    /// Materializes the map as a dense `out_dim × in_dim` matrix.
    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        if self.in_dim > cap || self.out_dim > cap {
            return Err(Error::DiagnosticUnavailable(format!(
                "operator {}x{} exceeds dense cap {cap}",
                self.out_dim, self.in_dim
            )));
        }
        if let Kind::Dense(m) = &self.kind {
            return Ok((**m).clone());
        }
        let mut out = DMatrix::zeros(self.out_dim, self.in_dim);
        let mut e = vec![0.0; self.in_dim];
        for j in 0..self.in_dim {
            e[j] = 1.0;
            let col = self.eval(&e);
            out.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok(out)
    }

    /// Upper estimate of `‖L‖²_op`.
    ///
    /// Structured kinds are answered exactly; everything else goes through
    /// power iteration on `L*L` from a fixed-seed start vector, stopped after
    /// `iters` steps or when the relative change drops below `tol`, then
    /// inflated by `1 + max(10·tol, 1e-6)`.
    pub fn op_norm_sq_upper(&self, iters: usize, tol: f64) -> Result<f64> {
        if iters == 0 || !(tol > 0.0) {
            return Err(Error::InvalidInput(
                "op_norm_sq_upper needs iters >= 1 and tol > 0".into(),
            ));
        }
        Ok(self.norm_sq_upper_inner(iters, tol))
    }

    /// [`LinearMap::op_norm_sq_upper`] with the crate defaults.
    pub fn norm_sq_upper(&self) -> f64 {
        self.norm_sq_upper_inner(NORM_ITERS, NORM_TOL)
    }

    fn is_orthogonal(&self) -> bool {
        matches!(self.kind, Kind::Identity | Kind::Dct(_) | Kind::InverseDct(_))
    }

    fn norm_sq_upper_inner(&self, iters: usize, tol: f64) -> f64 {
        match &self.kind {
            Kind::Identity | Kind::Dct(_) | Kind::InverseDct(_) => 1.0,
            Kind::Diagonal(d) => d.iter().fold(0.0_f64, |m, v| m.max(v * v)),
            Kind::Scaled(c, l) => {
                if *c == 0.0 {
                    0.0
                } else {
                    c * c * l.norm_sq_upper_inner(iters, tol)
                }
            }
            // Orthogonal factors do not change the norm.
            Kind::Composition(outer, inner) if outer.is_orthogonal() => inner.norm_sq_upper_inner(iters, tol),
            Kind::Composition(outer, inner) if inner.is_orthogonal() => outer.norm_sq_upper_inner(iters, tol),
            Kind::Dense(_) | Kind::Composition(..) => power_iteration_sq(
                self.in_dim,
                |x| self.eval_adjoint(&self.eval(x)),
                iters,
                tol,
            ),
        }
    }
}

/// Power iteration for the largest eigenvalue of a positive semidefinite
/// operator `G` (typically `L*L`) on `ℝⁿ`, returned with the safety inflation
/// `1 + max(10·tol, 1e-6)`. Returns 0 for the zero operator.
pub fn power_iteration_sq<F>(dim: usize, gram: F, iters: usize, tol: f64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|e| *e /= nv);

    let mut est = 0.0;
    for _ in 0..iters {
        let w = gram(&v);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        // Rayleigh quotient ⟨v, Gv⟩ for unit v; never exceeds λ_max.
        let rq = dot(&v, &w).max(0.0);
        let next = rq.max(est);
        v = w.iter().map(|e| e / nw).collect();
        let done = est > 0.0 && (next - est).abs() <= tol * next;
        est = next;
        if done {
            break;
        }
    }
    // ‖Gv‖ for unit v is also a lower bound for λ_max; take the larger.
    let w = gram(&v);
    let est = est.max(norm_sq(&w).sqrt().min(f64::MAX));
    est * (1.0 + (10.0 * tol).max(NORM_SAFETY))
}

/// True iff `null A ∩ null L = {0}`, decided on the stacked matrix `[A; L]`
/// by `σ_min > tol · σ_max`.
pub fn null_intersection_trivial(a: &LinearMap, l: &LinearMap, tol: f64) -> Result<bool> {
    null_intersection_trivial_capped(a, l, tol, DENSE_CAP)
}

pub fn null_intersection_trivial_capped(
    a: &LinearMap,
    l: &LinearMap,
    tol: f64,
    cap: usize,
) -> Result<bool> {
    check_dim("null_intersection_trivial", a.in_dim, l.in_dim)?;
    let n = a.in_dim;
    if n > cap {
        return Err(Error::DiagnosticUnavailable(format!(
            "{n} columns exceed dense cap {cap}"
        )));
    }
    let da = a.to_dense(usize::MAX)?;
    let dl = l.to_dense(usize::MAX)?;
    let rows = da.nrows() + dl.nrows();
    if rows < n {
        return Ok(false);
    }
    let mut stacked = DMatrix::zeros(rows, n);
    stacked.rows_mut(0, da.nrows()).copy_from(&da);
    stacked.rows_mut(da.nrows(), dl.nrows()).copy_from(&dl);
    let sv = stacked.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    Ok(smax > 0.0 && smin > tol * smax)
}
