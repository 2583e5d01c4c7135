//! Initial time derivatives implied by the equations at `t = 0` and the
//! compatibility conditions `u_j(1) = 0` they must satisfy.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bvp::{solve_sturm, SturmProblem};
use crate::error::{Error, Result};
use crate::evolution::{Coefficients, VectorField};
use crate::linalg::dot;
use crate::mesh::{boundary_deriv, boundary_value, fd_weights, GridFn};
use crate::norms::Jet;
use crate::string::{BackgroundState, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    pub order_checked: usize,
    pub tolerance: f64,
    /// `max_k |u_j^k(1)|` for `j = 0..=order_checked`.
    pub residuals: Vec<f64>,
    pub passed: bool,
}

/// Evaluates jet entries `0..=upto` at `s = 1` by quadratic extrapolation.
pub fn check_compat(jet: &Jet, upto: usize, tol: f64) -> Result<CompatReport> {
    if jet.order() < upto {
        return Err(Error::InsufficientJet {
            have: jet.order(),
            need: upto,
        });
    }
    let residuals: Vec<f64> = (0..=upto)
        .map(|j| {
            boundary_value(jet.entry(j))
                .iter()
                .fold(0.0, |m: f64, v| m.max(v.abs()))
        })
        .collect();
    let passed = residuals.iter().all(|r| *r <= tol);
    Ok(CompatReport {
        order_checked: upto,
        tolerance: tol,
        residuals,
        passed,
    })
}

/// Derivative of order `k` from the `k + 5` nearest centers (one-sided near
/// the ends). More accurate than the stencils shared with the norms, which
/// matters when derivatives are nested in the recurrences.
pub(crate) fn fine_derivative(u: &GridFn, k: usize) -> Result<GridFn> {
    let mesh = u.mesh();
    let n = mesh.n_cells();
    let width = k + 5;
    if n < width {
        return Err(Error::InvalidMesh(format!(
            "need at least {width} cells for derivative order {k}"
        )));
    }
    let c = mesh.centers();
    let b = u.components();
    let mut out = GridFn::zeros(mesh, b);
    for i in 0..n {
        let start = (i as isize - (width as isize - 1) / 2).clamp(0, (n - width) as isize) as usize;
        let w = fd_weights(c[i], &c[start..start + width], k);
        for comp in 0..b {
            let v = w.iter().enumerate().map(|(j, wj)| wj * u.get(start + j, comp)).sum();
            out.set(i, comp, v);
        }
    }
    Ok(out)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn trinom(n: usize, a: usize, b: usize) -> f64 {
    binom(n, a) * binom(n - a, b)
}

fn check_order(m: usize) -> Result<()> {
    if !(2..=4).contains(&m) {
        return Err(Error::UnsupportedOrder { order: m, max: 4 });
    }
    Ok(())
}

/// Matrix-valued field applied cell by cell.
fn apply_matrix(mats: &[DMatrix<f64>], u: &GridFn) -> GridFn {
    let b = u.components();
    let mut out = GridFn::zeros(u.mesh(), b);
    for (i, m) in mats.iter().enumerate() {
        for r in 0..b {
            out.set(i, r, (0..b).map(|c| m[(r, c)] * u.get(i, c)).sum());
        }
    }
    out
}

/// `(u_0, ..., u_m)` with `u_{j+2} = sum_k C(j,k) { ((d_t^{j-k} A) u_k')' +
/// (d_t^{j-k} Q) u_k'(1) } + d_t^j f`, all coefficient derivatives taken at
/// `t = 0` with step `dt_coeff` when the coefficient depends on time.
pub fn initial_jet_ls(u0: &GridFn, u1: &GridFn, c: &Coefficients, m: usize, dt_coeff: f64) -> Result<Jet> {
    check_order(m)?;
    u0.check_layout(u1)?;
    if u0.components() != c.dim() {
        return Err(Error::Mismatch("data and coefficient dimensions differ".into()));
    }
    if !(dt_coeff > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt_coeff must be positive, got {dt_coeff}"
        )));
    }
    let mesh = u0.mesh().clone();
    let centers = mesh.centers();
    let a_d: Vec<Vec<DMatrix<f64>>> = (0..=m - 2)
        .map(|j| {
            centers
                .iter()
                .map(|&s| c.a().time_derivative_at0(s, j, dt_coeff))
                .collect()
        })
        .collect();
    let q_d: Option<Vec<Vec<DMatrix<f64>>>> = c.q().map(|q| {
        (0..=m - 2)
            .map(|j| centers.iter().map(|&s| q.time_derivative_at0(s, j, dt_coeff)).collect())
            .collect()
    });
    let mut entries = vec![u0.clone(), u1.clone()];
    let slopes: Vec<GridFn> = vec![fine_derivative(u0, 1)?, fine_derivative(u1, 1)?];
    let mut slopes = slopes;
    for j in 0..=m - 2 {
        let mut next = match c.f() {
            None => GridFn::zeros(&mesh, c.dim()),
            Some(f) => GridFn::from_fn(&mesh, c.dim(), |s, out| {
                out.copy_from_slice(f.time_derivative_at0(s, j, dt_coeff).as_slice());
            }),
        };
        for k in 0..=j {
            let w = binom(j, k);
            let flux = apply_matrix(&a_d[j - k], &slopes[k]);
            next.axpy(w, &fine_derivative(&flux, 1)?);
            if let Some(q) = &q_d {
                let tr = boundary_deriv(&entries[k]);
                let trace = GridFn::from_fn(&mesh, c.dim(), |_, out| out.copy_from_slice(&tr));
                next.axpy(w, &apply_matrix(&q[j - k], &trace));
            }
        }
        if !next.is_finite() {
            return Err(Error::NonFinite("initial jet"));
        }
        slopes.push(fine_derivative(&next, 1)?);
        entries.push(next);
    }
    Jet::new(entries)
}

/// Initial jets `(y_0..y_m)` and `(nu_0..nu_{m-2})` of the linearized string,
/// alternating the tension problem at order `j` with the recurrence that
/// produces `y_{j+2}`.
pub fn initial_jet_string(
    y0: &GridFn,
    y1: &GridFn,
    f: Option<&VectorField>,
    h: Option<&ScalarField>,
    bg: &BackgroundState,
    m: usize,
    dt_coeff: f64,
) -> Result<(Jet, Jet)> {
    check_order(m)?;
    y0.check_layout(y1)?;
    let dim = bg.dim();
    if y0.components() != dim {
        return Err(Error::Mismatch("data and background dimensions differ".into()));
    }
    let mesh = y0.mesh().clone();
    let n = mesh.n_cells();
    let g = bg.gravity().to_vec();
    let bgd: Vec<_> = (0..=m - 1).map(|j| bg.time_derivative_at0(j)).collect();
    let potential = GridFn::from_values(&mesh, 1, bgd[0].x2.magnitude().iter().map(|v| v * v).collect())?;
    let mut ys = vec![y0.clone(), y1.clone()];
    let mut d1 = vec![fine_derivative(y0, 1)?, fine_derivative(y1, 1)?];
    let mut d2 = vec![fine_derivative(y0, 2)?, fine_derivative(y1, 2)?];
    let mut nus: Vec<GridFn> = Vec::new();
    for j in 0..=m - 2 {
        // tension at order j
        let mut src = vec![0.0; n];
        for (i, v) in src.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j1 in 0..=j {
                let j2 = j - j1;
                acc += 2.0 * binom(j, j1) * dot(bgd[j1 + 1].x1.cell(i), d1[j2 + 1].cell(i));
            }
            for j0 in 0..=j {
                for j1 in 0..=j - j0 {
                    let j2 = j - j0 - j1;
                    let w = trinom(j, j0, j1);
                    acc -= 2.0 * w * bgd[j0].tau.values()[i] * dot(bgd[j1].x2.cell(i), d2[j2].cell(i));
                    if j0 < j {
                        acc -= w * nus[j0].values()[i] * dot(bgd[j1].x2.cell(i), bgd[j2].x2.cell(i));
                    }
                }
            }
            if let Some(h) = h {
                acc += h.time_derivative_at0(mesh.centers()[i], j, dt_coeff);
            }
            *v = acc;
        }
        let a = -dot(&g, &boundary_deriv(&ys[j]));
        let nu = solve_sturm(&SturmProblem::new(
            potential.clone(),
            GridFn::from_values(&mesh, 1, src)?,
            a,
        ))?;
        nus.push(nu);
        // displacement at order j + 2
        let mut flux = GridFn::zeros(&mesh, dim);
        for j0 in 0..=j {
            let j1 = j - j0;
            let w = binom(j, j0);
            for i in 0..n {
                let tau = bgd[j0].tau.values()[i];
                let nu = nus[j0].values()[i];
                for k in 0..dim {
                    let v = flux.get(i, k) + w * (tau * d1[j1].get(i, k) + nu * bgd[j1].x1.get(i, k));
                    flux.set(i, k, v);
                }
            }
        }
        let mut next = fine_derivative(&flux, 1)?;
        if let Some(f) = f {
            let fj = GridFn::from_fn(&mesh, dim, |s, out| {
                out.copy_from_slice(f.time_derivative_at0(s, j, dt_coeff).as_slice());
            });
            next.axpy(1.0, &fj);
        }
        if !next.is_finite() {
            return Err(Error::NonFinite("initial jet"));
        }
        d1.push(fine_derivative(&next, 1)?);
        d2.push(fine_derivative(&next, 2)?);
        ys.push(next);
    }
    Ok((Jet::new(ys)?, Jet::new(nus)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::{chain_frequency, chain_mode};
    use crate::evolution::Field;
    use crate::mesh::make_mesh;
    use crate::string::make_straight_background;
    use nalgebra::DVector;

    #[test]
    fn zero_data_zero_jet() {
        let m = make_mesh(32, 1.0).unwrap();
        let z = GridFn::zeros(&m, 2);
        let c = Coefficients::hanging_chain(2, 1.0);
        let jet = initial_jet_ls(&z, &z, &c, 4, 1e-3).unwrap();
        assert!(jet.entries().iter().all(|e| e.max_abs() == 0.0));
        let rep = check_compat(&jet, 4, 0.0).unwrap();
        assert!(rep.passed && rep.residuals.iter().all(|r| *r == 0.0));
        let bg = make_straight_background(&[0.0, -1.0], &m, 1.0, 0.1).unwrap();
        let (y, nu) = initial_jet_string(&z, &z, None, None, &bg, 4, 1e-3).unwrap();
        assert!(y.entries().iter().chain(nu.entries()).all(|e| e.max_abs() == 0.0));
    }

    #[test]
    fn constant_data_fails_at_order_zero() {
        let m = make_mesh(32, 1.0).unwrap();
        let one = GridFn::from_scalar_fn(&m, |_| 1.0);
        let jet = Jet::new(vec![one.clone(), GridFn::zeros(&m, 1)]).unwrap();
        let rep = check_compat(&jet, 1, 1e-8).unwrap();
        assert!(!rep.passed);
        assert!((rep.residuals[0] - 1.0).abs() < 1e-12);
        assert!(check_compat(&jet, 2, 1e-8).is_err());
    }

    #[test]
    fn order_bounds() {
        let m = make_mesh(16, 1.0).unwrap();
        let z = GridFn::zeros(&m, 1);
        let c = Coefficients::hanging_chain(1, 1.0);
        assert!(matches!(
            initial_jet_ls(&z, &z, &c, 5, 1e-3),
            Err(Error::UnsupportedOrder { .. })
        ));
        assert!(matches!(
            initial_jet_ls(&z, &z, &c, 1, 1e-3),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn bessel_mode_jet() {
        let w2 = chain_frequency(1.0).powi(2);
        for &n in &[128, 256, 512] {
            let m = make_mesh(n, 1.0).unwrap();
            let u0 = GridFn::from_scalar_fn(&m, chain_mode);
            let c = Coefficients::hanging_chain(1, 1.0);
            let jet = initial_jet_ls(&u0, &GridFn::zeros(&m, 1), &c, 4, 1e-3).unwrap();
            let h2 = 1.0 / (n * n) as f64;
            assert!((jet.entry(2) - &u0.scaled(-w2)).max_abs() < h2);
            assert_eq!(jet.entry(3).max_abs(), 0.0);
            let d4 = jet.entry(4) - &u0.scaled(w2 * w2);
            assert!(crate::mesh::inner(&d4, &d4).sqrt() < 1e-4);
            assert!(check_compat(&jet, 2, 1e-6).unwrap().passed);
        }
    }

    #[test]
    fn time_independent_collapse() {
        let m = make_mesh(48, 1.0).unwrap();
        let c = Coefficients::hanging_chain(1, 2.0);
        let u0 = GridFn::from_scalar_fn(&m, |s| (1.0 - s) * s);
        let u1 = GridFn::from_scalar_fn(&m, |s| (1.0 - s) * (1.0 + s));
        let jet = initial_jet_ls(&u0, &u1, &c, 3, 1e-3).unwrap();
        // (2 s u1')' = 2 (1 - 2 s^2)' ... with u1 = 1 - s^2: (2 s (-2 s))' = -8 s
        for (s, v) in m.centers().iter().zip(jet.entry(3).values()) {
            assert!((v + 8.0 * s).abs() < 1e-9);
        }
    }

    #[test]
    fn forcing_derivatives_enter() {
        let m = make_mesh(32, 1.0).unwrap();
        let z = GridFn::zeros(&m, 1);
        let f: VectorField = Field::new(|s, t| DVector::from_vec(vec![(1.0 - s) * (1.0 + 3.0 * t)]));
        let c = Coefficients::hanging_chain(1, 1.0).with_f(f);
        let jet = initial_jet_ls(&z, &z, &c, 3, 1e-3).unwrap();
        for (s, v) in m.centers().iter().zip(jet.entry(3).values()) {
            assert!((v - 3.0 * (1.0 - s)).abs() < 1e-8);
        }
    }

    #[test]
    fn straight_string_tension_oracle() {
        let m = make_mesh(128, 1.0).unwrap();
        let g = [0.0, -2.0];
        let bg = make_straight_background(&g, &m, 1.0, 0.1).unwrap();
        let y0 = GridFn::from_fn(&m, 2, |s, o| {
            o[0] = (1.0 - s) * s;
            o[1] = 1.0 - s * s;
        });
        let z = GridFn::zeros(&m, 2);
        let (y, nu) = initial_jet_string(&y0, &z, None, None, &bg, 2, 1e-3).unwrap();
        // y0'(1) = (-1, -2), g . y0'(1) = 4 and nu_0 = -4 s
        for (s, v) in m.centers().iter().zip(nu.entry(0).values()) {
            assert!((v + 4.0 * s).abs() < 1e-10);
        }
        // y_2 = (2 s y0')' + (nu_0 x')' with x' = (0, 1): tangential (2 s (-2 s))' + (-4 s)' = -8 s - 4
        for (i, s) in m.centers().iter().enumerate() {
            assert!((y.entry(2).get(i, 1) - (-8.0 * s - 4.0)).abs() < 1e-8);
            assert!((y.entry(2).get(i, 0) - (2.0 - 8.0 * s)).abs() < 1e-8);
        }
    }
}
