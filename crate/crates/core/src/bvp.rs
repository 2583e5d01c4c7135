//! Two-point boundary value problems `-nu'' + c nu = h` with `nu(0) = 0`
//! and a Neumann condition at `s = 1`, discretized by cell-centered finite
//! volumes, and the tension-variation split built on them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_tridiagonal};
use crate::mesh::{boundary_deriv, boundary_value, derivative, fd_weights, GridFn, Mesh};
use crate::norms::Jet;
use crate::string::BackgroundState;

/// `-nu'' + c nu = h - h_II'` on `(0,1)`, `nu(0) = 0`, `nu'(1) = a (+ h_II(1))`.
#[derive(Debug, Clone)]
pub struct SturmProblem {
    pub c: GridFn,
    pub h: GridFn,
    pub a: f64,
    pub h_ii: Option<GridFn>,
}

impl SturmProblem {
    pub fn new(c: GridFn, h: GridFn, a: f64) -> SturmProblem {
        SturmProblem { c, h, a, h_ii: None }
    }

    pub fn with_divergence(mut self, h_ii: GridFn) -> SturmProblem {
        self.h_ii = Some(h_ii);
        self
    }

    /// `c = 0`, `h = 0`.
    pub fn free(mesh: &Arc<Mesh>, a: f64) -> SturmProblem {
        SturmProblem::new(GridFn::zeros(mesh, 1), GridFn::zeros(mesh, 1), a)
    }

    fn validate(&self) -> Result<()> {
        for (name, g) in [("potential", &self.c), ("source", &self.h)] {
            if g.components() != 1 {
                return Err(Error::Mismatch(format!("{name} must be scalar")));
            }
        }
        self.c.check_layout(&self.h)?;
        if let Some(h2) = &self.h_ii {
            self.c.check_layout(h2)?;
        }
        if self.c.values().iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("potential must be nonnegative".into()));
        }
        if !self.a.is_finite() {
            return Err(Error::NonFinite("Neumann datum"));
        }
        Ok(())
    }
}

/// Weights on `(nu_0, nu_1)` of the derivative at `s = 0` of the quadratic
/// through `(0, 0)`, `(s_0, nu_0)`, `(s_1, nu_1)`.
fn left_face_weights(mesh: &Mesh) -> [f64; 2] {
    let c = mesh.centers();
    let w = fd_weights(0.0, &[0.0, c[0], c[1]], 1);
    [w[1], w[2]]
}

/// Values of a center-sampled function at every face: linear interpolation
/// inside, linear extrapolation at both ends.
pub fn to_faces(u: &GridFn) -> Vec<f64> {
    let mesh = u.mesh();
    let n = mesh.n_cells();
    let c = mesh.centers();
    let f = mesh.faces();
    let v = u.values();
    let lerp = |i: usize, j: usize, x: f64| v[i] + (v[j] - v[i]) * (x - c[i]) / (c[j] - c[i]);
    let mut out = Vec::with_capacity(n + 1);
    out.push(lerp(0, 1, f[0]));
    out.extend((1..n).map(|k| lerp(k - 1, k, f[k])));
    out.push(lerp(n - 2, n - 1, f[n]));
    out
}

fn solve_flux_form(p: &SturmProblem, h_ii_faces: Option<&[f64]>) -> Result<GridFn> {
    let mesh = p.c.mesh().clone();
    let n = mesh.n_cells();
    let hs = mesh.spacings();
    let [w0, w1] = left_face_weights(&mesh);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    // cell i: -(G_{i+1} - G_i) / h_i + c_i nu_i = h_i, G_f = nu'(face) - h_II(face)
    for i in 0..n {
        let h = hs[i];
        diag[i] = p.c.values()[i];
        rhs[i] = p.h.values()[i];
        if i + 1 < n {
            let d = mesh.face_distance(i + 1);
            diag[i] += 1.0 / (h * d);
            upper[i] = -1.0 / (h * d);
        } else {
            rhs[i] += p.a / h;
        }
        if i > 0 {
            let d = mesh.face_distance(i);
            diag[i] += 1.0 / (h * d);
            lower[i] = -1.0 / (h * d);
        } else {
            diag[0] += w0 / h;
            upper[0] += w1 / h;
        }
        if let Some(hf) = h_ii_faces {
            let right = if i + 1 < n { hf[i + 1] } else { 0.0 };
            rhs[i] -= (right - hf[i]) / h;
        }
    }
    let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut res: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        let mut r = diag[i] * sol[i] - rhs[i];
        if i > 0 {
            r += lower[i] * sol[i - 1];
        }
        if i + 1 < n {
            r += upper[i] * sol[i + 1];
        }
        res = res.max(r.abs());
        scale = scale.max(rhs[i].abs()).max((diag[i] * sol[i]).abs());
    }
    if res > 1e-10 * scale.max(1e-300) {
        return Err(Error::SolverFailure(format!("residual {res:.3e} too large")));
    }
    GridFn::from_values(&mesh, 1, sol)
}

/// Solves `-nu'' + c nu = h`, `nu(0) = 0`, `nu'(1) = a`.
pub fn solve_sturm(p: &SturmProblem) -> Result<GridFn> {
    p.validate()?;
    if p.h_ii.is_some() {
        return Err(Error::InvalidArgument(
            "use solve_sturm_div for divergence-form sources".into(),
        ));
    }
    solve_flux_form(p, None)
}

/// Solves `-nu'' + c nu = h - h_II'`, `nu(0) = 0`, `nu'(1) = a + h_II(1)`,
/// keeping `h_II` inside the face fluxes.
pub fn solve_sturm_div(p: &SturmProblem) -> Result<GridFn> {
    p.validate()?;
    let h2 = p
        .h_ii
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("divergence-form source missing".into()))?;
    let faces = to_faces(h2);
    solve_flux_form(p, Some(&faces))
}

fn potential(bg: &BackgroundState, t: f64) -> GridFn {
    let x2 = bg.at(t).x2;
    GridFn::from_values(x2.mesh(), 1, x2.magnitude().iter().map(|v| v * v).collect()).expect("finite background")
}

/// `phi` with `-phi'' + |x''|^2 phi = 0`, `phi(0) = 0`, `phi'(1) = 1`.
pub fn solve_phi(bg: &BackgroundState, t: f64) -> Result<GridFn> {
    let c = potential(bg, t);
    let mesh = c.mesh().clone();
    solve_sturm(&SturmProblem::new(c, GridFn::zeros(&mesh, 1), 1.0))
}

/// Lower-order tension part for the state `(y, y_t)` taken from the first two
/// jet entries, with the Neumann datum `-2 x_t'.y_t + 2 (x''.y') tau` at `s = 1`.
pub fn solve_nul(bg: &BackgroundState, y: &Jet, h: &GridFn, t: f64) -> Result<GridFn> {
    if y.order() < 1 {
        return Err(Error::InsufficientJet {
            have: y.order(),
            need: 1,
        });
    }
    let b = bg.at(t);
    let (y0, y1) = (y.entry(0), y.entry(1));
    let y2 = derivative(y0, 2)?;
    let yt1 = derivative(y1, 1)?;
    let n = y0.n_cells();
    let mut src = vec![0.0; n];
    for (i, v) in src.iter_mut().enumerate() {
        *v = 2.0 * dot(b.xt1.cell(i), yt1.cell(i)) - 2.0 * dot(b.x2.cell(i), y2.cell(i)) * b.tau.values()[i]
            + h.values()[i];
    }
    let a = -2.0 * dot(&boundary_value(&b.xt1), &boundary_value(y1))
        + 2.0 * dot(&boundary_value(&b.x2), &boundary_deriv(y0)) * boundary_value(&b.tau)[0];
    let mesh = y0.mesh();
    let c = potential(bg, t);
    solve_sturm(&SturmProblem::new(c, GridFn::from_values(mesh, 1, src)?, a))
}

/// `nu_p = -((g + 2 tau x'')(1) . y'(1)) phi`; returns `(nu_p + nu_l, nu_p)`.
pub fn assemble_nu(
    bg: &BackgroundState,
    phi: &GridFn,
    y_boundary_slope: &[f64],
    nul: &GridFn,
    t: f64,
) -> (GridFn, GridFn) {
    let coef = -dot(&bg.boundary_trace(t), y_boundary_slope);
    let nup = phi.scaled(coef);
    (&nup + nul, nup)
}
