//! Nonconvexly regularized convex (NRC) linear regression.
//!
//! The model is `min_{𝔠x ∈ C} f(Ax) + μ·Ψ_B(𝔏x)` where `f` is a smooth convex
//! fidelity, `Ψ` a prox-friendly convex seed and
//! `Ψ_B(z) = Ψ(z) − min_v [Ψ(v) + ½‖B(z − v)‖²]` its generalized Moreau
//! enhancement. With `B` chosen so that `f∘A − (μ/2)‖B𝔏·‖²` stays convex the
//! whole cost is convex, and a Krasnosel'skiĭ–Mann iteration of an averaged
//! operator reaches a global minimizer.
//!
//! Modules, bottom-up: [`linops`] (operators, norms, rank diagnostics),
//! [`proxlib`] (seed functions and projections), [`fidelity`] (smooth
//! fidelities and their curvature), [`gme`] (B design and convexity
//! certificate), [`solver`] (the fixed-point iteration), [`declip`] (the
//! declipping experiment) and [`cli`].

pub mod cli;
pub mod declip;
pub mod error;
pub mod fidelity;
pub mod gme;
pub mod linops;
pub mod proxlib;
pub mod solver;
pub mod textio;
pub mod vector;

pub use error::{Error, Result};
pub use fidelity::{BoxSet, CurvatureProfile, RowKind, SmoothFidelity};
pub use gme::GmeRegularizer;
pub use linops::LinearMap;
pub use proxlib::ProxFunction;
pub use solver::{NrcProblem, SolverState, StepParams};
