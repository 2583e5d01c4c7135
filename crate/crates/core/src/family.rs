//! Reproducible randomized test families.
//!
//! Every draw comes from one SplitMix64 stream whose state is initialised
//! with the 64-bit seed; uniform reals use the top 53 bits of each output.

use std::sync::Arc;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::mesh::{GridFn, Mesh};

pub struct Family {
    rng: SplitMix64,
}

impl Family {
    pub fn new(seed: u64) -> Family {
        Family {
            rng: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let x = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + (hi - lo) * x
    }

    /// Coefficients of a smooth profile: `modes` cosines with amplitudes
    /// decaying like `(1 + k)^{-2}`.
    pub fn smooth_coefficients(&mut self, modes: usize) -> Vec<f64> {
        (0..modes)
            .map(|k| self.uniform(-1.0, 1.0) / ((1 + k) * (1 + k)) as f64)
            .collect()
    }

    /// A smooth scalar function on `mesh`; multiplied by `1 - s` when
    /// `vanish_at_one` so it satisfies the Dirichlet condition.
    pub fn smooth_function(&mut self, mesh: &Arc<Mesh>, modes: usize, vanish_at_one: bool) -> GridFn {
        let a = self.smooth_coefficients(modes);
        let shift = self.uniform(0.0, 1.0);
        GridFn::from_scalar_fn(mesh, move |s| eval_profile(&a, shift, s, vanish_at_one))
    }

    /// A smooth vector function with `dim` components.
    pub fn smooth_vector(&mut self, mesh: &Arc<Mesh>, dim: usize, modes: usize, vanish_at_one: bool) -> GridFn {
        let parts: Vec<(Vec<f64>, f64)> = (0..dim)
            .map(|_| (self.smooth_coefficients(modes), self.uniform(0.0, 1.0)))
            .collect();
        GridFn::from_fn(mesh, dim, |s, out| {
            for (o, (a, shift)) in out.iter_mut().zip(&parts) {
                *o = eval_profile(a, *shift, s, vanish_at_one);
            }
        })
    }
}

/// `sum_k a_k cos(pi k s + shift) [* (1 - s)]`.
pub fn eval_profile(a: &[f64], shift: f64, s: f64, vanish_at_one: bool) -> f64 {
    let v: f64 = a
        .iter()
        .enumerate()
        .map(|(k, ak)| ak * (std::f64::consts::PI * k as f64 * s + shift).cos())
        .sum();
    if vanish_at_one {
        v * (1.0 - s)
    } else {
        v
    }
}
