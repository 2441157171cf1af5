//! Standard normal upper tail `Q(z) = ∫_z^∞ φ(t) dt` in log form and its
//! hazard `h(z) = φ(z)/Q(z)`.
//!
//! For `z ≤ 8` the tail comes from `erfc`; beyond that it switches to the
//! Laplace continued fraction for the Mills ratio, which stays accurate where
//! `erfc` underflows.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

const SWITCH: f64 = 8.0;
const CF_DEPTH: usize = 80;

/// `h(z) − z` for `z > SWITCH` via the continued fraction
/// `1/(z + 2/(z + 3/(z + …)))`.
fn cf_tail(z: f64) -> f64 {
    let mut t = z;
    for k in (2..=CF_DEPTH).rev() {
        t = z + k as f64 / t;
    }
    1.0 / t
}

#[inline]
fn ln_phi(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// `ln Q(z)`.
pub fn ln_q(z: f64) -> f64 {
    if z > SWITCH {
        ln_phi(z) - (z + cf_tail(z)).ln()
    } else {
        (0.5 * erfc(z * FRAC_1_SQRT_2)).ln()
    }
}

/// Inverse Mills ratio `φ(z)/Q(z)`.
pub fn hazard(z: f64) -> f64 {
    if z > SWITCH {
        z + cf_tail(z)
    } else {
        (ln_phi(z) - ln_q(z)).exp()
    }
}

/// `h(z)·(h(z) − z)`, the derivative of the hazard; lies in `(0, 1)`.
pub fn hazard_slope(z: f64) -> f64 {
    if z > SWITCH {
        let k = cf_tail(z);
        (z + k) * k
    } else {
        let h = hazard(z);
        h * (h - z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on [z, z + 40] after the substitution keeps the
    /// integrand well scaled: Q(z)·exp(z²/2) = ∫_0^∞ φ₀(z + t) e^{z²/2} dt.
    fn scaled_q_quadrature(z: f64) -> f64 {
        let n = 400_000;
        let len = 40.0;
        let h = len / n as f64;
        let g = |t: f64| (-(z * t) - 0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let mut acc = g(0.0) + g(len);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn ln_q_matches_quadrature_across_switch() {
        for z in [-3.0, -0.5, 0.0, 1.0, 4.0, 7.9, 8.0, 8.1, 12.0, 40.0] {
            let want = scaled_q_quadrature(z).ln() - 0.5 * z * z;
            let got = ln_q(z);
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn continued_fraction_is_continuous_with_erfc() {
        let z = SWITCH;
        let direct = (0.5 * erfc(z * FRAC_1_SQRT_2)).ln();
        let cf = ln_phi(z) - (z + cf_tail(z)).ln();
        assert!((direct - cf).abs() < 1e-11 * direct.abs());
        let h_direct = (ln_phi(z) - direct).exp();
        assert!((h_direct - hazard(z + 1e-12)).abs() < 1e-9 * h_direct);
    }

    #[test]
    fn hazard_at_zero() {
        assert!((hazard(0.0) - (2.0 / PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hazard_slope_in_unit_interval_and_increasing() {
        let mut prev = 0.0;
        for k in 0..2000 {
            let z = -30.0 + k as f64 * 0.05;
            let s = hazard_slope(z);
            assert!((0.0..1.0).contains(&s), "z={z} s={s}");
            assert!(s >= prev - 1e-12, "z={z}");
            prev = s;
        }
    }
}
