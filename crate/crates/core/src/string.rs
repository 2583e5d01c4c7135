//! The linearized hanging string around a background motion `(x, tau)`:
//! background states, coefficient assembly, a direct coupled solver and the
//! successive-approximation scheme with its contraction diagnostics.

use std::io::Read;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bvp::{assemble_nu, solve_nul, solve_phi, to_faces};
use crate::error::{Error, Result};
use crate::evolution::{
    default_boundary_tol, solve_ibvp_with, step_count, AssumptionReport, Coefficients, EvolState, Field, SolveOptions,
    Stepper, Trajectory, VectorField,
};
use crate::linalg::dot;
use crate::mesh::{boundary_deriv, boundary_value, derivative, fd_weights, GridFn, Mesh};
use crate::norms::{igamma, jet_norm, Jet, TimeSeries};

pub type ScalarField = Field<f64>;

/// Background fields at one time, all sampled at cell centers except
/// `tau_faces`.
#[derive(Debug, Clone)]
pub struct BgSample {
    pub x: GridFn,
    pub x1: GridFn,
    pub x2: GridFn,
    pub x3: GridFn,
    pub xt: GridFn,
    pub xt1: GridFn,
    pub tau: GridFn,
    pub tau1: GridFn,
    pub tau_faces: Vec<f64>,
}

impl BgSample {
    fn combine(terms: &[(f64, &BgSample)]) -> BgSample {
        let lc = |get: &dyn Fn(&BgSample) -> &GridFn| {
            let mut acc = get(terms[0].1).scaled(terms[0].0);
            for (w, s) in &terms[1..] {
                acc.axpy(*w, get(s));
            }
            acc
        };
        let mut tf = vec![0.0; terms[0].1.tau_faces.len()];
        for (w, s) in terms {
            for (a, b) in tf.iter_mut().zip(&s.tau_faces) {
                *a += w * b;
            }
        }
        BgSample {
            x: lc(&|s| &s.x),
            x1: lc(&|s| &s.x1),
            x2: lc(&|s| &s.x2),
            x3: lc(&|s| &s.x3),
            xt: lc(&|s| &s.xt),
            xt1: lc(&|s| &s.xt1),
            tau: lc(&|s| &s.tau),
            tau1: lc(&|s| &s.tau1),
            tau_faces: tf,
        }
    }

    fn zero_like(&self) -> BgSample {
        BgSample::combine(&[(0.0, self)])
    }
}

/// Background motion `(x, tau)` sampled on a mesh and a time grid, with all
/// derivatives computed once.
#[derive(Debug, Clone)]
pub struct BackgroundState {
    dim: usize,
    g: Vec<f64>,
    mesh: Arc<Mesh>,
    times: Vec<f64>,
    samples: Vec<BgSample>,
    kind: String,
}

/// Checks of the structural assumptions on a background.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundReport {
    pub tau_over_s_min: f64,
    pub tau_over_s_max: f64,
    pub max_x_at_1: f64,
    pub max_stretch_defect: f64,
    pub tau_bounds_ok: bool,
    pub x_at_1_ok: bool,
    pub inextensible: bool,
}

fn gravity_direction(g: &[f64]) -> Result<(f64, Vec<f64>)> {
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(gn > 0.0) || !gn.is_finite() || !(2..=3).contains(&g.len()) {
        return Err(Error::InvalidGravity);
    }
    Ok((gn, g.iter().map(|v| v / gn).collect()))
}

/// A unit vector orthogonal to `e`.
pub fn transverse_direction(e: &[f64]) -> Vec<f64> {
    if e.len() == 2 {
        return vec![-e[1], e[0]];
    }
    // cross e with the coordinate axis it is least aligned with
    let k = (0..3)
        .min_by(|&a, &b| e[a].abs().partial_cmp(&e[b].abs()).unwrap())
        .unwrap();
    let mut axis = [0.0; 3];
    axis[k] = 1.0;
    let c = [
        e[1] * axis[2] - e[2] * axis[1],
        e[2] * axis[0] - e[0] * axis[2],
        e[0] * axis[1] - e[1] * axis[0],
    ];
    let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    c.iter().map(|v| v / n).collect()
}

/// Straight hanging string `x = (1 - s) g/|g|`, `tau = |g| s`.
pub fn make_straight_background(g: &[f64], mesh: &Arc<Mesh>, t_end: f64, dt: f64) -> Result<BackgroundState> {
    let (gn, e) = gravity_direction(g)?;
    step_count(t_end, dt)?;
    let dim = g.len();
    let neg: Vec<f64> = e.iter().map(|v| -v).collect();
    let zero = GridFn::zeros(mesh, dim);
    let sample = BgSample {
        x: GridFn::from_profile(mesh, &e, |s| 1.0 - s),
        x1: GridFn::from_profile(mesh, &neg, |_| 1.0),
        x2: zero.clone(),
        x3: zero.clone(),
        xt: zero.clone(),
        xt1: zero,
        tau: GridFn::from_scalar_fn(mesh, |s| gn * s),
        tau1: GridFn::from_scalar_fn(mesh, |_| gn),
        tau_faces: mesh.faces().iter().map(|f| gn * f).collect(),
    };
    Ok(BackgroundState {
        dim,
        g: g.to_vec(),
        mesh: mesh.clone(),
        times: vec![0.0],
        samples: vec![sample],
        kind: "straight".into(),
    })
}

/// A steady, bent configuration `x = (1 - s) e + k sin(pi (1 - s)) e_perp`
/// with `tau = |g| s`. It is not an equilibrium; it exercises the
/// curvature-dependent terms of the linearized system.
pub fn make_bent_background(g: &[f64], mesh: &Arc<Mesh>, bend: f64) -> Result<BackgroundState> {
    use std::f64::consts::PI;
    let (gn, e) = gravity_direction(g)?;
    let p = transverse_direction(&e);
    let dim = g.len();
    let comb = |a: f64, b: f64| -> Vec<f64> { e.iter().zip(&p).map(|(x, y)| a * x + b * y).collect() };
    let field = |f: &dyn Fn(f64) -> (f64, f64)| {
        GridFn::from_fn(mesh, dim, |s, out| {
            let (a, b) = f(s);
            out.copy_from_slice(&comb(a, b));
        })
    };
    let zero = GridFn::zeros(mesh, dim);
    let sample = BgSample {
        x: field(&|s| (1.0 - s, bend * (PI * (1.0 - s)).sin())),
        x1: field(&|s| (-1.0, -bend * PI * (PI * (1.0 - s)).cos())),
        x2: field(&|s| (0.0, -bend * PI * PI * (PI * (1.0 - s)).sin())),
        x3: field(&|s| (0.0, bend * PI * PI * PI * (PI * (1.0 - s)).cos())),
        xt: zero.clone(),
        xt1: zero,
        tau: GridFn::from_scalar_fn(mesh, |s| gn * s),
        tau1: GridFn::from_scalar_fn(mesh, |_| gn),
        tau_faces: mesh.faces().iter().map(|f| gn * f).collect(),
    };
    Ok(BackgroundState {
        dim,
        g: g.to_vec(),
        mesh: mesh.clone(),
        times: vec![0.0],
        samples: vec![sample],
        kind: format!("bent({bend})"),
    })
}

impl BackgroundState {
    /// Builds a background from position and tension samples at the cell
    /// centers of `mesh` and the given strictly increasing times.
    pub fn from_samples(
        g: &[f64],
        mesh: &Arc<Mesh>,
        times: Vec<f64>,
        x: Vec<GridFn>,
        tau: Vec<GridFn>,
    ) -> Result<BackgroundState> {
        gravity_direction(g)?;
        let dim = g.len();
        if times.is_empty() || times.len() != x.len() || times.len() != tau.len() {
            return Err(Error::Background(
                "times, positions and tensions differ in length".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Background("times must start at 0 and increase strictly".into()));
        }
        if times.len() == 2 {
            return Err(Error::Background(
                "need one time sample (steady) or at least three".into(),
            ));
        }
        for (xi, ti) in x.iter().zip(&tau) {
            if xi.components() != dim || ti.components() != 1 || !Arc::ptr_eq(xi.mesh(), mesh) && **xi.mesh() != **mesh
            {
                return Err(Error::Background(
                    "sample layout does not match mesh and gravity dimension".into(),
                ));
            }
        }
        let nt = times.len();
        let mut samples = Vec::with_capacity(nt);
        for k in 0..nt {
            // second-order time differences on the sample grid
            let xt = if nt == 1 {
                GridFn::zeros(mesh, dim)
            } else {
                let idx: Vec<usize> = if k == 0 {
                    vec![0, 1, 2]
                } else if k == nt - 1 {
                    vec![nt - 3, nt - 2, nt - 1]
                } else {
                    vec![k - 1, k, k + 1]
                };
                let nodes: Vec<f64> = idx.iter().map(|&j| times[j]).collect();
                let w = fd_weights(times[k], &nodes, 1);
                let mut acc = x[idx[0]].scaled(w[0]);
                for (j, wj) in idx.iter().zip(&w).skip(1) {
                    acc.axpy(*wj, &x[*j]);
                }
                acc
            };
            let mut tf = to_faces(&tau[k]);
            tf[0] = 0.0;
            samples.push(BgSample {
                x1: derivative(&x[k], 1)?,
                x2: derivative(&x[k], 2)?,
                x3: derivative(&x[k], 3)?,
                xt1: derivative(&xt, 1)?,
                xt,
                tau1: derivative(&tau[k], 1)?,
                tau: tau[k].clone(),
                x: x[k].clone(),
                tau_faces: tf,
            });
        }
        Ok(BackgroundState {
            dim,
            g: g.to_vec(),
            mesh: mesh.clone(),
            times,
            samples,
            kind: "samples".into(),
        })
    }

    /// Reads a CSV with header `t,s,x0,..,x{d-1},tau`; the `s` column must
    /// list the cell centers of `mesh` for every time.
    pub fn from_csv(reader: impl Read, g: &[f64], mesh: &Arc<Mesh>) -> Result<BackgroundState> {
        let dim = g.len();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Background(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut expect = vec!["t".to_string(), "s".to_string()];
        expect.extend((0..dim).map(|k| format!("x{k}")));
        expect.push("tau".into());
        if header != expect {
            return Err(Error::Background(format!(
                "expected header {}, found {}",
                expect.join(","),
                header.join(",")
            )));
        }
        let n = mesh.n_cells();
        let mut times: Vec<f64> = Vec::new();
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut taus: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Background(e.to_string()))?;
            let vals = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Background(format!("row {}: {e}", line + 2)))?;
            if vals.len() != dim + 3 {
                return Err(Error::Background(format!("row {}: wrong number of columns", line + 2)));
            }
            if times.last() != Some(&vals[0]) {
                if let Some(x) = xs.last() {
                    if x.len() != n * dim {
                        return Err(Error::Background(format!(
                            "time {} has an incomplete profile",
                            times.last().unwrap()
                        )));
                    }
                }
                times.push(vals[0]);
                xs.push(Vec::with_capacity(n * dim));
                taus.push(Vec::with_capacity(n));
            }
            let i = taus.last().unwrap().len();
            if i >= n || (vals[1] - mesh.centers()[i]).abs() > 1e-9 {
                return Err(Error::Background(format!(
                    "row {}: s = {} does not match the mesh",
                    line + 2,
                    vals[1]
                )));
            }
            xs.last_mut().unwrap().extend_from_slice(&vals[2..2 + dim]);
            taus.last_mut().unwrap().push(vals[2 + dim]);
        }
        if taus.last().is_none_or(|t| t.len() != n) {
            return Err(Error::Background("incomplete or empty background file".into()));
        }
        let x = xs
            .into_iter()
            .map(|v| GridFn::from_values(mesh, dim, v))
            .collect::<Result<Vec<_>>>()?;
        let tau = taus
            .into_iter()
            .map(|v| GridFn::from_values(mesh, 1, v))
            .collect::<Result<Vec<_>>>()?;
        let mut bg = BackgroundState::from_samples(g, mesh, times, x, tau)?;
        bg.kind = "file".into();
        Ok(bg)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gravity(&self) -> &[f64] {
        &self.g
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn is_steady(&self) -> bool {
        self.samples.len() == 1
    }

    pub fn is_straight(&self) -> bool {
        self.kind == "straight"
    }

    /// Fields at time `t`, linear in time between samples and constant beyond the last one.
    pub fn at(&self, t: f64) -> BgSample {
        if self.samples.len() == 1 || t <= 0.0 {
            return self.samples[0].clone();
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k >= self.times.len() {
            return self.samples.last().unwrap().clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let th = (t - t0) / (t1 - t0);
        BgSample::combine(&[(1.0 - th, &self.samples[k - 1]), (th, &self.samples[k])])
    }

    /// `j`-th time derivative of every field at `t = 0`.
    pub fn time_derivative_at0(&self, j: usize) -> BgSample {
        if j == 0 {
            return self.samples[0].clone();
        }
        if self.samples.len() == 1 || j + 2 > self.samples.len() {
            if self.samples.len() > 1 {
                log::warn!("background has too few samples for time derivative {j}; using zero");
            }
            return self.samples[0].zero_like();
        }
        let w = fd_weights(0.0, &self.times[..j + 2], j);
        let terms: Vec<(f64, &BgSample)> = w.iter().copied().zip(&self.samples[..j + 2]).collect();
        BgSample::combine(&terms)
    }

    /// `(g + 2 tau x'')(1, t)` by the quadratic boundary extrapolation.
    pub fn boundary_trace(&self, t: f64) -> Vec<f64> {
        let b = self.at(t);
        let x2 = boundary_value(&b.x2);
        let tau = boundary_value(&b.tau)[0];
        self.g.iter().zip(&x2).map(|(g, x)| g + 2.0 * tau * x).collect()
    }

    pub fn validate(&self, m0: f64, stretch_tol: f64) -> BackgroundReport {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let mut x1max: f64 = 0.0;
        let mut stretch: f64 = 0.0;
        for smp in &self.samples {
            for (s, tau) in self.mesh.centers().iter().zip(smp.tau.values()) {
                lo = lo.min(tau / s);
                hi = hi.max(tau / s);
            }
            x1max = x1max.max(boundary_value(&smp.x).iter().fold(0.0, |m, v| m.max(v.abs())));
            stretch = stretch.max(smp.x1.magnitude().iter().fold(0.0, |m, v| m.max((v - 1.0).abs())));
        }
        let tol_x = if self.kind == "straight" {
            1e-10
        } else {
            default_boundary_tol(&self.samples[0].x)
        };
        BackgroundReport {
            tau_over_s_min: lo,
            tau_over_s_max: hi,
            max_x_at_1: x1max,
            max_stretch_defect: stretch,
            tau_bounds_ok: lo >= 1.0 / m0 && hi <= m0,
            x_at_1_ok: x1max <= tol_x,
            inextensible: stretch <= stretch_tol,
        }
    }

    /// Residuals of the equations of motion and of the tension problem at
    /// the first sample (only meaningful for steady backgrounds).
    pub fn residuals(&self) -> Result<(f64, f64, f64)> {
        let b = &self.samples[0];
        let dim = self.dim;
        let n = self.mesh.n_cells();
        let mut motion: f64 = 0.0;
        let mut tension: f64 = 0.0;
        for i in 0..n {
            let tau = b.tau.values()[i];
            let tau1 = b.tau1.values()[i];
            for k in 0..dim {
                // x_tt - (tau x')' - g with (tau x')' = tau' x' + tau x''
                let r = -(tau1 * b.x1.get(i, k) + tau * b.x2.get(i, k)) - self.g[k];
                motion = motion.max(r.abs());
            }
            let x2sq = dot(b.x2.cell(i), b.x2.cell(i));
            let xt1sq = dot(b.xt1.cell(i), b.xt1.cell(i));
            let tau2 = if self.is_straight() {
                0.0
            } else {
                derivative(&b.tau1, 1)?.values()[i]
            };
            tension = tension.max((-tau2 + x2sq * tau - xt1sq).abs());
        }
        let bc = boundary_value(&b.tau1)[0] + dot(&self.g, &boundary_value(&b.x1));
        Ok((motion, tension, bc.abs()))
    }
}

/// Interpolates center values (exact hits at centers, linear between, constant beyond).
fn center_lookup(centers: &[f64], values: &[f64], s: f64) -> f64 {
    let k = centers.partition_point(|&c| c < s);
    if k < centers.len() && centers[k] == s {
        return values[k];
    }
    if k == 0 {
        return values[0];
    }
    if k >= centers.len() {
        return values[centers.len() - 1];
    }
    let th = (s - centers[k - 1]) / (centers[k] - centers[k - 1]);
    values[k - 1] * (1.0 - th) + values[k] * th
}

/// Interpolates on the merged face/center grid of a mesh.
fn merged_lookup(mesh: &Mesh, faces: &[f64], centers: &[f64], s: f64) -> f64 {
    let f = mesh.faces();
    let c = mesh.centers();
    let i = f.partition_point(|&x| x <= s).clamp(1, mesh.n_cells()) - 1;
    if s <= c[i] {
        let th = (s - f[i]) / (c[i] - f[i]);
        faces[i] * (1.0 - th) + centers[i] * th
    } else {
        let th = (s - c[i]) / (f[i + 1] - c[i]);
        centers[i] * (1.0 - th) + faces[i + 1] * th
    }
}

fn time_lerp<T: Clone>(times: &[f64], data: &[T], t: f64, f: impl Fn(&T) -> f64) -> f64 {
    if data.len() == 1 || t <= 0.0 {
        return f(&data[0]);
    }
    let k = times.partition_point(|&x| x <= t);
    if k >= times.len() {
        return f(&data[times.len() - 1]);
    }
    let th = (t - times[k - 1]) / (times[k] - times[k - 1]);
    f(&data[k - 1]) * (1.0 - th) + f(&data[k]) * th
}

/// Coefficient assembly output: the coefficients of the reduced system and
/// the assumption checks.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    pub coefficients: Coefficients,
    pub assumptions: AssumptionReport,
    pub background: BackgroundReport,
    /// `phi` at every background sample time.
    pub phi: Vec<GridFn>,
}

/// `(phi x')'` at centers.
fn phi_x1_deriv(phi: &GridFn, x1: &GridFn) -> Result<GridFn> {
    let dim = x1.components();
    let mut prod = x1.clone();
    for i in 0..phi.n_cells() {
        let p = phi.values()[i];
        for k in 0..dim {
            prod.set(i, k, p * x1.get(i, k));
        }
    }
    derivative(&prod, 1)
}

/// `A = tau Id` and `Q = -(phi x')' (x) (g + 2 tau x'')(1)`, sampled at the
/// background times and interpolated linearly in between.
pub fn build_linearized_coeffs(bg: &BackgroundState, m0: f64, m1: f64) -> Result<LinearizedSystem> {
    let dim = bg.dim;
    let mesh = bg.mesh.clone();
    let mut phis = Vec::new();
    let mut qs: Vec<Vec<f64>> = Vec::new();
    for (k, &t) in bg.times.iter().enumerate() {
        let smp = &bg.samples[k];
        let phi = solve_phi(bg, t)?;
        let dphix = phi_x1_deriv(&phi, &smp.x1)?;
        let b = bg.boundary_trace(t);
        let mut q = vec![0.0; mesh.n_cells() * dim * dim];
        for i in 0..mesh.n_cells() {
            for r in 0..dim {
                for c in 0..dim {
                    q[i * dim * dim + r * dim + c] = -dphix.get(i, r) * b[c];
                }
            }
        }
        phis.push(phi);
        qs.push(q);
    }
    let times = bg.times.clone();
    let centers = mesh.centers().to_vec();
    let steady = bg.is_steady();
    let q_field = {
        let (times, centers, qs) = (times.clone(), centers.clone(), Arc::new(qs));
        let eval = move |s: f64, t: f64| {
            let mut m = DMatrix::zeros(dim, dim);
            for r in 0..dim {
                for c in 0..dim {
                    m[(r, c)] = time_lerp(&times, &qs, t, |q| {
                        let col: Vec<f64> = (0..centers.len()).map(|i| q[i * dim * dim + r * dim + c]).collect();
                        center_lookup(&centers, &col, s)
                    });
                }
            }
            m
        };
        if steady {
            Field::steady(move |s| eval(s, 0.0))
        } else {
            Field::new(eval)
        }
    };
    let a_field = if bg.is_straight() {
        let gn = bg.g.iter().map(|v| v * v).sum::<f64>().sqrt();
        Field::steady(move |s| DMatrix::identity(dim, dim) * (gn * s))
    } else {
        let samples: Arc<Vec<(Vec<f64>, Vec<f64>)>> = Arc::new(
            bg.samples
                .iter()
                .map(|s| (s.tau_faces.clone(), s.tau.values().to_vec()))
                .collect(),
        );
        let m = mesh.clone();
        let eval = move |s: f64, t: f64| {
            let tau = time_lerp(&times, &samples, t, |(f, c)| merged_lookup(&m, f, c, s));
            DMatrix::identity(dim, dim) * tau
        };
        if steady {
            Field::steady(move |s| eval(s, 0.0))
        } else {
            Field::new(eval)
        }
    };
    let coefficients = Coefficients::new(dim, a_field)
        .with_q(q_field)
        .with_bounds(m0, m1)
        .with_label(&format!("linearized string, {} background", bg.kind));
    let assumptions = coefficients.validate(&mesh, &bg.times);
    let background = bg.validate(m0, 1e-6);
    if !assumptions.passed || !background.tau_bounds_ok {
        log::warn!("linearized coefficients violate the structural assumptions: {assumptions:?} {background:?}");
    }
    Ok(LinearizedSystem {
        coefficients,
        assumptions,
        background,
        phi: phis,
    })
}

/// Initial data and forcing of the linearized string.
#[derive(Debug, Clone)]
pub struct StringData {
    pub y0: GridFn,
    pub y1: GridFn,
    pub f: Option<VectorField>,
    pub h: Option<ScalarField>,
}

impl StringData {
    pub fn free(y0: GridFn, y1: GridFn) -> StringData {
        StringData {
            y0,
            y1,
            f: None,
            h: None,
        }
    }

    pub fn h_at(&self, mesh: &Arc<Mesh>, t: f64) -> GridFn {
        match &self.h {
            None => GridFn::zeros(mesh, 1),
            Some(h) => GridFn::from_scalar_fn(mesh, |s| h.eval(s, t)),
        }
    }

    pub fn scaled(&self, c: f64) -> StringData {
        let f = self.f.clone().map(|f| Field::new(move |s, t| f.eval(s, t) * c));
        let h = self.h.clone().map(|h| Field::new(move |s, t| h.eval(s, t) * c));
        StringData {
            y0: self.y0.scaled(c),
            y1: self.y1.scaled(c),
            f,
            h,
        }
    }
}

/// Per-iteration record of the successive approximations.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PicardDiagnostics {
    pub gamma: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `I_gamma(|||y^(n+1) - y^(n)|||_2)` for `n = 1, 2, ...`
    pub increments: Vec<f64>,
    /// Successive increment ratios `r_n`.
    pub ratios: Vec<f64>,
    /// Geometric mean of the finite positive ratios.
    pub mean_ratio: Option<f64>,
    pub reference_norm: f64,
}

#[derive(Debug, Clone)]
pub struct StringTrajectory {
    pub y: Trajectory,
    pub nu: Vec<GridFn>,
    pub nu_p: Vec<GridFn>,
    pub nu_l: Vec<GridFn>,
    pub max_stage_iterations: usize,
    pub picard: Option<PicardDiagnostics>,
}

impl StringTrajectory {
    /// Rows `t, s, comp, u, v, nu, nu_p, nu_l`.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "t,s,comp,u,v,nu,nu_p,nu_l")?;
        for (k, st) in self.y.snapshots.iter().enumerate() {
            let (u, v) = (st.u(), st.v());
            for (i, s) in u.mesh().centers().iter().enumerate() {
                for c in 0..u.components() {
                    writeln!(
                        w,
                        "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                        st.t,
                        s,
                        c,
                        u.get(i, c),
                        v.get(i, c),
                        self.nu[k].values()[i],
                        self.nu_p[k].values()[i],
                        self.nu_l[k].values()[i]
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// `(nu_l x')'` at centers for the state `(y, v)` at time `t`.
fn lower_order_forcing(
    bg: &BackgroundState,
    data: &StringData,
    y: &GridFn,
    v: &GridFn,
    t: f64,
) -> Result<(GridFn, GridFn)> {
    let mesh = y.mesh();
    let nul = solve_nul(bg, &Jet::new(vec![y.clone(), v.clone()])?, &data.h_at(mesh, t), t)?;
    let forcing = phi_x1_deriv(&nul, &bg.at(t).x1)?;
    Ok((forcing, nul))
}

fn tension_parts(
    bg: &BackgroundState,
    data: &StringData,
    phi: &GridFn,
    st: &EvolState,
) -> Result<(GridFn, GridFn, GridFn)> {
    let mesh = st.u().mesh();
    let nul = solve_nul(
        bg,
        &Jet::new(vec![st.u().clone(), st.v().clone()])?,
        &data.h_at(mesh, st.t),
        st.t,
    )?;
    let (nu, nup) = assemble_nu(bg, phi, &boundary_deriv(st.u()), &nul, st.t);
    Ok((nu, nup, nul))
}

fn phi_at(sys: &LinearizedSystem, bg: &BackgroundState, t: f64) -> Result<GridFn> {
    if bg.is_steady() {
        Ok(sys.phi[0].clone())
    } else {
        solve_phi(bg, t)
    }
}

fn record_tension(
    bg: &BackgroundState,
    sys: &LinearizedSystem,
    data: &StringData,
    y: Trajectory,
    max_stage_iterations: usize,
    picard: Option<PicardDiagnostics>,
) -> Result<StringTrajectory> {
    let mut nu = Vec::new();
    let mut nu_p = Vec::new();
    let mut nu_l = Vec::new();
    for st in &y.snapshots {
        let phi = phi_at(sys, bg, st.t)?;
        let (a, b, c) = tension_parts(bg, data, &phi, st)?;
        nu.push(a);
        nu_p.push(b);
        nu_l.push(c);
    }
    Ok(StringTrajectory {
        y,
        nu,
        nu_p,
        nu_l,
        max_stage_iterations,
        picard,
    })
}

fn check_string_data(bg: &BackgroundState, data: &StringData) -> Result<()> {
    let jet = Jet::new(vec![data.y0.clone(), data.y1.clone()])?;
    if data.y0.components() != bg.dim {
        return Err(Error::Mismatch("data and background dimensions differ".into()));
    }
    let tol = default_boundary_tol(&data.y0).max(default_boundary_tol(&data.y1));
    let rep = crate::compat::check_compat(&jet, 1, tol)?;
    if !rep.passed {
        return Err(Error::InvalidArgument(format!(
            "data violate the compatibility conditions at orders 0 and 1: {:?}",
            rep.residuals
        )));
    }
    Ok(())
}

pub const STAGE_TOL: f64 = 1e-10;
pub const STAGE_MAX_ITER: usize = 50;

/// Coupled solve: at every implicit-midpoint stage the tension problem is
/// solved from the stage values and iterated to a fixed point.
pub fn solve_linearized_direct(
    bg: &BackgroundState,
    data: &StringData,
    t_end: f64,
    dt: f64,
    opts: &SolveOptions,
) -> Result<StringTrajectory> {
    check_string_data(bg, data)?;
    let sys = build_linearized_coeffs(bg, 10.0, 10.0)?;
    let mut coeffs = sys.coefficients.clone();
    if let Some(f) = &data.f {
        coeffs = coeffs.with_f(f.clone());
    }
    let steps = step_count(t_end, dt)?;
    let every = opts.snapshot_every.max(1);
    let stepper = Stepper::new(&coeffs, bg.mesh(), dt, 0.0)?;
    let mut u = data.y0.clone();
    let mut v = data.y1.clone();
    let mut snaps = vec![EvolState::new(0.0, u.clone(), v.clone())];
    let (mut forcing, _) = lower_order_forcing(bg, data, &u, &v, 0.0)?;
    let mut worst_iter = 0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let tm = t + 0.5 * dt;
        let mut mid = stepper.stage(&u, &v, t, Some(&forcing))?;
        let mut it = 1;
        loop {
            let vbar = stepper.mid_velocity(&u, &mid);
            let (fnew, _) = lower_order_forcing(bg, data, &mid, &vbar, tm)?;
            let next = stepper.stage(&u, &v, t, Some(&fnew))?;
            let change = (&next - &mid).max_abs();
            forcing = fnew;
            mid = next;
            it += 1;
            if change <= STAGE_TOL * mid.max_abs().max(1.0) {
                break;
            }
            if it >= STAGE_MAX_ITER {
                return Err(Error::StepFailure {
                    t,
                    reason: format!(
                        "stage fixed point did not converge in {STAGE_MAX_ITER} iterations (last change {change:.3e})"
                    ),
                });
            }
        }
        worst_iter = worst_iter.max(it);
        let (un, vn) = stepper.finish(&u, &v, &mid);
        u = un;
        v = vn;
        if (k + 1) % every == 0 || k + 1 == steps {
            snaps.push(EvolState::new((k + 1) as f64 * dt, u.clone(), v.clone()));
        }
    }
    let y = Trajectory {
        snapshots: snaps,
        dt,
        snapshot_every: every,
        eps: 0.0,
        label: coeffs.label().to_string(),
    };
    record_tension(bg, &sys, data, y, worst_iter, None)
}

/// Jet-norm series `t -> |||u(t)|||_2` over a full-resolution trajectory.
fn jet2_series(traj: &Trajectory) -> Result<TimeSeries> {
    let jets = crate::energy::trajectory_jets(traj)?;
    let vals = jets.iter().map(|j| jet_norm(j, 2, 2)).collect::<Result<Vec<_>>>()?;
    TimeSeries::new(traj.times(), vals)
}

fn difference_trajectory(a: &Trajectory, b: &Trajectory) -> Trajectory {
    let snapshots = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(p, q)| EvolState::new(p.t, p.u() - q.u(), p.v() - q.v()))
        .collect();
    Trajectory {
        snapshots,
        dt: a.dt,
        snapshot_every: a.snapshot_every,
        eps: a.eps,
        label: "difference".into(),
    }
}

/// Successive approximations: `y^(1)` is the Taylor polynomial of the
/// initial jet, and `y^(n+1)` solves the reduced system with the
/// lower-order tension computed from `y^(n)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_linearized_picard(
    bg: &BackgroundState,
    data: &StringData,
    t_end: f64,
    dt: f64,
    gamma: f64,
    max_iter: usize,
    tol: f64,
) -> Result<StringTrajectory> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    check_string_data(bg, data)?;
    let sys = build_linearized_coeffs(bg, 10.0, 10.0)?;
    let mut coeffs = sys.coefficients.clone();
    if let Some(f) = &data.f {
        coeffs = coeffs.with_f(f.clone());
    }
    let steps = step_count(t_end, dt)?;
    let (yjet, _) = crate::compat::initial_jet_string(
        &data.y0,
        &data.y1,
        data.f.as_ref(),
        data.h.as_ref(),
        bg,
        2,
        dt.min(1e-3),
    )?;
    let (y0, y1, y2) = (yjet.entry(0), yjet.entry(1), yjet.entry(2));
    let snaps = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let mut u = y0.clone();
            u.axpy(t, y1);
            u.axpy(0.5 * t * t, y2);
            let mut v = y1.clone();
            v.axpy(t, y2);
            EvolState::new(t, u, v)
        })
        .collect();
    let mut current = Trajectory {
        snapshots: snaps,
        dt,
        snapshot_every: 1,
        eps: 0.0,
        label: "picard seed".into(),
    };
    let reference_norm = igamma(&jet2_series(&current)?, gamma)?;
    let mut diag = PicardDiagnostics {
        gamma,
        reference_norm,
        ..Default::default()
    };
    let opts = SolveOptions {
        snapshot_every: 1,
        compat_tol: Some(f64::INFINITY),
    };
    let mut streak = 0;
    for _ in 0..max_iter.max(1) {
        let forcings = (0..steps)
            .map(|k| {
                let (a, b) = (&current.snapshots[k], &current.snapshots[k + 1]);
                let ybar = GridFn::lin_comb(0.5, a.u(), 0.5, b.u());
                let vbar = GridFn::lin_comb(0.5, a.v(), 0.5, b.v());
                lower_order_forcing(bg, data, &ybar, &vbar, (k as f64 + 0.5) * dt).map(|r| r.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let extra = |k: usize| Some(forcings[k].clone());
        let next = solve_ibvp_with(&coeffs, &data.y0, &data.y1, 0.0, t_end, dt, &opts, Some(&extra))?;
        let inc = igamma(&jet2_series(&difference_trajectory(&next, &current))?, gamma)?;
        diag.iterations += 1;
        if let Some(&prev) = diag.increments.last() {
            let r = if prev > 0.0 { inc / prev } else { 0.0 };
            diag.ratios.push(r);
            streak = if r >= 1.0 { streak + 1 } else { 0 };
        }
        diag.increments.push(inc);
        current = next;
        if inc <= tol * reference_norm || inc == 0.0 {
            diag.converged = true;
            break;
        }
        if streak >= 3 {
            let worst = diag.ratios.iter().cloned().fold(0.0, f64::max);
            return Err(Error::Divergence(format!(
                "increment ratios {:?} stayed >= 1 for 3 iterations at gamma = {gamma}; try gamma >= {:.3e}",
                diag.ratios,
                2.0 * gamma * worst
            )));
        }
    }
    let positive: Vec<f64> = diag
        .ratios
        .iter()
        .copied()
        .filter(|r| *r > 0.0 && r.is_finite())
        .collect();
    diag.mean_ratio = if positive.is_empty() {
        None
    } else {
        Some((positive.iter().map(|r| r.ln()).sum::<f64>() / positive.len() as f64).exp())
    };
    record_tension(bg, &sys, data, current, 0, Some(diag))
}

/// Direction vector (unit) from a named axis relative to gravity.
pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Constant-in-space vector forcing `f(s, t) = amplitude(t) * direction`.
pub fn uniform_forcing(direction: Vec<f64>, amplitude: impl Fn(f64) -> f64 + Send + Sync + 'static) -> VectorField {
    Field::new(move |_, t| DVector::from_vec(direction.clone()) * amplitude(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::chain_mode_grid;
    use crate::mesh::make_mesh;

    #[test]
    fn straight_background_solves_the_steady_problem() {
        let m = make_mesh(64, 1.0).unwrap();
        let bg = make_straight_background(&[0.0, -1.0], &m, 1.0, 0.01).unwrap();
        let (motion, tension, bc) = bg.residuals().unwrap();
        assert!(motion < 1e-12 && tension < 1e-12 && bc < 1e-12);
        let rep = bg.validate(10.0, 1e-12);
        assert!(rep.tau_bounds_ok && rep.x_at_1_ok && rep.inextensible);
        assert!(matches!(
            make_straight_background(&[0.0, 0.0], &m, 1.0, 0.01),
            Err(Error::InvalidGravity)
        ));
    }

    #[test]
    fn straight_coefficients() {
        let m = make_mesh(64, 1.0).unwrap();
        let g = [0.0, -2.0];
        let bg = make_straight_background(&g, &m, 1.0, 0.01).unwrap();
        let sys = build_linearized_coeffs(&bg, 10.0, 10.0).unwrap();
        let q = sys.coefficients.q().unwrap();
        for &s in m.centers() {
            let qm = q.eval(s, 0.0);
            // |g| e (x) e with e = (0, -1)
            assert!((qm[(1, 1)] - 2.0).abs() < 1e-10);
            assert!(qm[(0, 0)].abs() < 1e-12 && qm[(0, 1)].abs() < 1e-12 && qm[(1, 0)].abs() < 1e-12);
            let a = sys.coefficients.a().eval(s, 0.0);
            assert!((a[(0, 0)] - 2.0 * s).abs() < 1e-15);
        }
        assert!(sys.assumptions.passed);
    }

    #[test]
    fn transverse_directions_are_orthogonal() {
        for e in [vec![0.0, -1.0], vec![0.0, 0.0, -1.0], unit(&[1.0, 2.0, 3.0])] {
            let p = transverse_direction(&e);
            assert!(dot(&e, &p).abs() < 1e-15);
            assert!((dot(&p, &p) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_data_gives_zero_string() {
        let m = make_mesh(32, 1.0).unwrap();
        let bg = make_straight_background(&[0.0, -1.0], &m, 0.2, 0.01).unwrap();
        let z = GridFn::zeros(&m, 2);
        let data = StringData::free(z.clone(), z);
        let tr = solve_linearized_direct(&bg, &data, 0.2, 0.01, &SolveOptions::default()).unwrap();
        assert!(tr.y.snapshots.iter().all(|s| s.u().max_abs() == 0.0));
        assert!(tr.nu.iter().all(|n| n.max_abs() == 0.0));
        let p = solve_linearized_picard(&bg, &data, 0.2, 0.01, 20.0, 10, 1e-10).unwrap();
        assert_eq!(p.picard.unwrap().iterations, 1);
    }

    #[test]
    fn csv_background_round_trip() {
        let m = make_mesh(16, 1.0).unwrap();
        let mut text = String::from("t,s,x0,x1,tau\n");
        for &t in &[0.0, 0.1, 0.2] {
            for &s in m.centers() {
                text.push_str(&format!("{t},{s:.17e},0,{},{}\n", -(1.0 - s), s));
            }
        }
        let bg = BackgroundState::from_csv(text.as_bytes(), &[0.0, -1.0], &m).unwrap();
        assert_eq!(bg.times().len(), 3);
        let smp = bg.at(0.15);
        assert!(smp.x2.max_abs() < 1e-10);
        assert!(smp.xt.max_abs() < 1e-12);
        assert!(bg.validate(10.0, 1e-8).inextensible);
        let bad = "t,s,x0,tau\n0,0.5,0,0\n";
        assert!(BackgroundState::from_csv(bad.as_bytes(), &[0.0, -1.0], &m).is_err());
    }

    #[test]
    fn transverse_motion_has_no_tension() {
        let m = make_mesh(64, 1.0).unwrap();
        let bg = make_straight_background(&[0.0, -1.0], &m, 0.5, 0.01).unwrap();
        let y0 = chain_mode_grid(&m, &[1.0, 0.0]);
        let data = StringData::free(y0, GridFn::zeros(&m, 2));
        let tr = solve_linearized_direct(&bg, &data, 0.5, 0.01, &SolveOptions::default()).unwrap();
        for (st, nu) in tr.y.snapshots.iter().zip(&tr.nu) {
            assert!(nu.max_abs() < 1e-8);
            assert!(st.u().component(1).max_abs() < 1e-8);
        }
    }
}
