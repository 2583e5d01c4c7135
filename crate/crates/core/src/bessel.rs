//! Bessel functions of the first kind of orders 0 and 1 by power series, and
//! the hanging-chain eigenmode built from them.

use crate::mesh::{GridFn, Mesh};
use std::sync::Arc;

/// `J_0(x)` by its power series; accurate to roundoff for `|x| <= 10`.
pub fn j0(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..80 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// `J_1(x)` by its power series.
pub fn j1(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 0.5 * x;
    let mut sum = term;
    for k in 1..80 {
        term *= q / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// First positive zero of `J_0`, by bisection on `[2, 3]`.
pub fn j0_first_zero() -> f64 {
    let (mut lo, mut hi) = (2.0f64, 3.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if j0(lo) * j0(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Angular frequency of the fundamental mode of `u_tt = (g s u_s)_s`.
pub fn chain_frequency(g_norm: f64) -> f64 {
    0.5 * j0_first_zero() * g_norm.sqrt()
}

/// `J_0(j s^{1/2})`, the fundamental hanging-chain profile.
pub fn chain_mode(s: f64) -> f64 {
    j0(j0_first_zero() * s.sqrt())
}

/// Derivative of [`chain_mode`] in `s`.
pub fn chain_mode_deriv(s: f64) -> f64 {
    let z = j0_first_zero();
    if s == 0.0 {
        return -0.25 * z * z;
    }
    let r = s.sqrt();
    -j1(z * r) * z / (2.0 * r)
}

/// The fundamental profile sampled on a mesh, times a direction vector.
pub fn chain_mode_grid(mesh: &Arc<Mesh>, direction: &[f64]) -> GridFn {
    let z = j0_first_zero();
    GridFn::from_profile(mesh, direction, |s| j0(z * s.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((j0(0.0) - 1.0).abs() < 1e-16);
        assert!((j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        let z = j0_first_zero();
        assert!((z - 2.404_825_557_695_773).abs() < 1e-13);
        assert!((chain_frequency(1.0) - 1.202413).abs() < 1e-6);
    }

    #[test]
    fn mode_solves_the_eigenproblem() {
        // (s u')' = -(z^2/4) u, checked with centered differences on the exact profile
        let z = j0_first_zero();
        let h = 1e-4;
        for &s in &[0.1, 0.3, 0.5, 0.9] {
            let flux = |x: f64| x * chain_mode_deriv(x);
            let lhs = (flux(s + h) - flux(s - h)) / (2.0 * h);
            assert!((lhs + 0.25 * z * z * chain_mode(s)).abs() < 1e-7);
        }
        assert!(chain_mode(1.0).abs() < 1e-14);
    }
}
