//! Radial lifting `v(x) = u(|x|^2)` to the unit disc and the disc Sobolev
//! norms of the lift, computed in one dimension through `s = r^2`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{derivative, GridFn, Mesh};
use crate::norms::xnorm;

/// Samples `v(r_i) = u(s_i)` at `r_i = sqrt(s_i)`.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub r_nodes: Vec<f64>,
    /// Cell-major values, as in the source function.
    pub values: Vec<f64>,
    pub components: usize,
    source: Arc<Mesh>,
}

impl RadialProfile {
    pub fn source_mesh(&self) -> &Arc<Mesh> {
        &self.source
    }

    /// The source function `u(s) = v(sqrt(s))`.
    pub fn to_source(&self) -> GridFn {
        GridFn::from_values(&self.source, self.components, self.values.clone()).expect("consistent layout")
    }
}

pub fn lift_to_disc(u: &GridFn) -> RadialProfile {
    RadialProfile {
        r_nodes: u.mesh().centers().iter().map(|s| s.sqrt()).collect(),
        values: u.values().to_vec(),
        components: u.components(),
        source: u.mesh().clone(),
    }
}

pub const MAX_DISC_ORDER: usize = 2;

/// `||v||_{H^m(D)}` for `m <= 2`, with `|grad v|^2 = v_r^2` and
/// `|hess v|^2 = v_rr^2 + (v_r / r)^2`, where `v_r = 2 r u'`,
/// `v_r / r = 2 u'` and `v_rr = 2 u' + 4 s u''`.
pub fn disc_hm_norm(v: &RadialProfile, m: usize) -> Result<f64> {
    if m > MAX_DISC_ORDER {
        return Err(Error::UnsupportedOrder {
            order: m,
            max: MAX_DISC_ORDER,
        });
    }
    let u = v.to_source();
    let mesh = &v.source;
    let h = mesh.spacings();
    let c = mesh.centers();
    let nc = v.components;
    // dx over the disc = pi ds
    let mut total: f64 = (0..mesh.n_cells())
        .map(|i| h[i] * u.cell(i).iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        * PI;
    if m >= 1 {
        let d1 = derivative(&u, 1)?;
        total += PI
            * (0..mesh.n_cells())
                .map(|i| h[i] * 4.0 * c[i] * d1.cell(i).iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>();
        if m >= 2 {
            let d2 = derivative(&u, 2)?;
            let mut acc = 0.0;
            for i in 0..mesh.n_cells() {
                for k in 0..nc {
                    let vrr = 2.0 * d1.get(i, k) + 4.0 * c[i] * d2.get(i, k);
                    let vr_r = 2.0 * d1.get(i, k);
                    acc += h[i] * (vrr * vrr + vr_r * vr_r);
                }
            }
            total += PI * acc;
        }
    }
    Ok(total.sqrt())
}

/// `||u^#||_{H^m(D)} / ||u||_{X^m}`.
pub fn equivalence_ratio(u: &GridFn, m: usize) -> Result<f64> {
    let den = xnorm(u, m)?;
    let num = disc_hm_norm(&lift_to_disc(u), m)?;
    if !(den > 0.0) {
        return Err(Error::UndefinedRatio("X^m norm vanishes".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_mesh;

    #[test]
    fn lift_is_sampling() {
        let m = make_mesh(32, 1.5).unwrap();
        let u = GridFn::from_scalar_fn(&m, |s| s);
        let v = lift_to_disc(&u);
        for (r, x) in v.r_nodes.iter().zip(&v.values) {
            assert!((r * r - x).abs() < 1e-15);
        }
        assert_eq!(v.to_source().values(), u.values());
    }

    #[test]
    fn reference_norms() {
        let m = make_mesh(512, 1.0).unwrap();
        let one = GridFn::from_scalar_fn(&m, |_| 1.0);
        assert!((disc_hm_norm(&lift_to_disc(&one), 0).unwrap() - PI.sqrt()).abs() < 1e-4);
        assert!((equivalence_ratio(&one, 0).unwrap() - PI.sqrt()).abs() < 1e-12);
        let s = GridFn::from_scalar_fn(&m, |s| s);
        let want = (PI / 3.0 + 2.0 * PI).sqrt();
        assert!((disc_hm_norm(&lift_to_disc(&s), 1).unwrap() - want).abs() < 1e-3);
        let z = GridFn::zeros(&m, 1);
        assert_eq!(disc_hm_norm(&lift_to_disc(&z), 2).unwrap(), 0.0);
        assert!(matches!(equivalence_ratio(&z, 1), Err(Error::UndefinedRatio(_))));
        assert!(disc_hm_norm(&lift_to_disc(&s), 3).is_err());
    }

    #[test]
    fn scaling_invariance() {
        let m = make_mesh(128, 1.0).unwrap();
        let u = GridFn::from_scalar_fn(&m, |s| (3.0 * s).sin() + s * s);
        for k in 0..=2 {
            let a = equivalence_ratio(&u, k).unwrap();
            let b = equivalence_ratio(&u.scaled(-7.5), k).unwrap();
            assert!((a - b).abs() < 1e-12 * a);
        }
    }
}
