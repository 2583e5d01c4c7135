//! Implicit-midpoint time stepping for
//! `u_tt = (A u_s)_s + Q u_s(1,t) + eps s u_ts + f`, `u(1,t) = 0`,
//! with no condition at the degenerate end `s = 0`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BlockTridiag, LowRankCorrected};
use crate::mesh::{boundary_deriv, boundary_value, fd_weights, GridFn, Mesh};
use crate::norms::TimeSeries;

/// A coefficient given as a function of `(s, t)`.
pub struct Field<T> {
    eval: Arc<dyn Fn(f64, f64) -> T + Send + Sync>,
    time_independent: bool,
}

impl<T> Clone for Field<T> {
    fn clone(&self) -> Self {
        Field {
            eval: self.eval.clone(),
            time_independent: self.time_independent,
        }
    }
}

impl<T> std::fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("time_independent", &self.time_independent)
            .finish_non_exhaustive()
    }
}

impl<T> Field<T>
where
    T: Clone + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    pub fn new(f: impl Fn(f64, f64) -> T + Send + Sync + 'static) -> Field<T> {
        Field {
            eval: Arc::new(f),
            time_independent: false,
        }
    }

    pub fn steady(f: impl Fn(f64) -> T + Send + Sync + 'static) -> Field<T> {
        Field {
            eval: Arc::new(move |s, _| f(s)),
            time_independent: true,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn eval(&self, s: f64, t: f64) -> T {
        (self.eval)(s, t)
    }

    /// `j`-th time derivative at `t = 0` by a one-sided second-order
    /// difference with step `h` (exactly zero for steady fields).
    pub fn time_derivative_at0(&self, s: f64, j: usize, h: f64) -> T {
        let base = self.eval(s, 0.0);
        if j == 0 {
            return base;
        }
        if self.time_independent {
            return base * 0.0;
        }
        let nodes: Vec<f64> = (0..j + 2).map(|k| k as f64 * h).collect();
        let w = fd_weights(0.0, &nodes, j);
        let mut acc = base * w[0];
        for (k, wk) in w.iter().enumerate().skip(1) {
            acc = acc + self.eval(s, nodes[k]) * *wk;
        }
        acc
    }
}

pub type MatrixField = Field<DMatrix<f64>>;
pub type VectorField = Field<DVector<f64>>;

/// Coefficients of the degenerate system together with the bounds `M0`, `M1`
/// they are expected to satisfy.
#[derive(Debug, Clone)]
pub struct Coefficients {
    dim: usize,
    a: MatrixField,
    q: Option<MatrixField>,
    f: Option<VectorField>,
    m0: f64,
    m1: f64,
    label: String,
}

/// Outcome of checking the structural assumptions on `A` and `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub max_asymmetry: f64,
    pub min_eig_over_s: f64,
    pub max_eig_over_s: f64,
    pub max_q_norm: f64,
    pub m0: f64,
    pub symmetric: bool,
    pub bounded: bool,
    pub passed: bool,
}

impl Coefficients {
    pub fn new(dim: usize, a: MatrixField) -> Coefficients {
        Coefficients {
            dim,
            a,
            q: None,
            f: None,
            m0: 10.0,
            m1: 10.0,
            label: String::new(),
        }
    }

    /// `A = scale * s * Id`.
    pub fn hanging_chain(dim: usize, scale: f64) -> Coefficients {
        Coefficients::new(dim, Field::steady(move |s| DMatrix::identity(dim, dim) * (scale * s)))
            .with_label(&format!("A = {scale} s Id"))
    }

    pub fn with_q(mut self, q: MatrixField) -> Coefficients {
        self.q = Some(q);
        self
    }

    pub fn with_f(mut self, f: VectorField) -> Coefficients {
        self.f = Some(f);
        self
    }

    pub fn without_f(mut self) -> Coefficients {
        self.f = None;
        self
    }

    pub fn with_bounds(mut self, m0: f64, m1: f64) -> Coefficients {
        self.m0 = m0;
        self.m1 = m1;
        self
    }

    pub fn with_label(mut self, label: &str) -> Coefficients {
        self.label = label.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> &MatrixField {
        &self.a
    }

    pub fn q(&self) -> Option<&MatrixField> {
        self.q.as_ref()
    }

    pub fn f(&self) -> Option<&VectorField> {
        self.f.as_ref()
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_time_independent(&self) -> bool {
        self.a.is_time_independent()
            && self.q.as_ref().is_none_or(|q| q.is_time_independent())
            && self.f.as_ref().is_none_or(|f| f.is_time_independent())
    }

    /// `A` at every face, flattened row-major per face.
    pub fn a_faces(&self, mesh: &Mesh, t: f64) -> Vec<f64> {
        sample_matrices(&self.a, mesh.faces(), t, self.dim)
    }

    pub fn q_centers(&self, mesh: &Mesh, t: f64) -> Option<Vec<f64>> {
        self.q.as_ref().map(|q| sample_matrices(q, mesh.centers(), t, self.dim))
    }

    pub fn f_centers(&self, mesh: &Arc<Mesh>, t: f64) -> GridFn {
        match &self.f {
            None => GridFn::zeros(mesh, self.dim),
            Some(f) => GridFn::from_fn(mesh, self.dim, |s, out| {
                out.copy_from_slice(f.eval(s, t).as_slice());
            }),
        }
    }

    /// Checks symmetry of `A` and the two-sided bound `M0^{-1} s <= A <= M0 s`
    /// at every center and sample time.
    pub fn validate(&self, mesh: &Mesh, times: &[f64]) -> AssumptionReport {
        let mut max_asym: f64 = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let mut qmax: f64 = 0.0;
        for &t in times {
            for &s in mesh.centers() {
                let a = self.a.eval(s, t);
                max_asym = max_asym.max((&a - a.transpose()).amax());
                let sym = (&a + a.transpose()) * 0.5;
                let eig = SymmetricEigen::new(sym).eigenvalues;
                lo = lo.min(eig.min() / s);
                hi = hi.max(eig.max() / s);
                if let Some(q) = &self.q {
                    qmax = qmax.max(q.eval(s, t).norm());
                }
            }
        }
        let symmetric = max_asym <= 1e-12;
        let bounded = lo >= 1.0 / self.m0 && hi <= self.m0;
        AssumptionReport {
            max_asymmetry: max_asym,
            min_eig_over_s: lo,
            max_eig_over_s: hi,
            max_q_norm: qmax,
            m0: self.m0,
            symmetric,
            bounded,
            passed: symmetric && bounded,
        }
    }
}

fn sample_matrices(field: &MatrixField, points: &[f64], t: f64, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * dim * dim);
    for &s in points {
        let m = field.eval(s, t);
        for r in 0..dim {
            for c in 0..dim {
                out.push(m[(r, c)]);
            }
        }
    }
    out
}

/// `((A u_s)_s)_i` in flux form. The flux through the face `s = 0` is
/// `A(0) (u_0 - left_ghost) / d_0`, which vanishes for admissible `A`
/// whatever `left_ghost` is; the face `s = 1` sees the Dirichlet value 0.
pub fn apply_flux_operator(c: &Coefficients, u: &GridFn, t: f64, left_ghost: Option<&[f64]>) -> GridFn {
    let mesh = u.mesh();
    let a = c.a_faces(mesh, t);
    apply_flux_with(mesh, &a, u, left_ghost)
}

fn apply_flux_with(mesh: &Arc<Mesh>, a: &[f64], u: &GridFn, left_ghost: Option<&[f64]>) -> GridFn {
    let n = mesh.n_cells();
    let b = u.components();
    let bb = b * b;
    let zero = vec![0.0; b];
    let ghost = left_ghost.unwrap_or(&zero);
    // fluxes at faces 0..=n
    let mut flux = vec![0.0; (n + 1) * b];
    let mut diff = vec![0.0; b];
    for f in 0..=n {
        let left = if f == 0 { ghost } else { u.cell(f - 1) };
        let right = if f == n { &zero[..] } else { u.cell(f) };
        let d = mesh.face_distance(f);
        for k in 0..b {
            diff[k] = (right[k] - left[k]) / d;
        }
        let af = &a[f * bb..(f + 1) * bb];
        for r in 0..b {
            flux[f * b + r] = (0..b).map(|k| af[r * b + k] * diff[k]).sum();
        }
    }
    let mut out = GridFn::zeros(mesh, b);
    for i in 0..n {
        let h = mesh.spacings()[i];
        for r in 0..b {
            out.set(i, r, (flux[(i + 1) * b + r] - flux[i * b + r]) / h);
        }
    }
    out
}

/// Centered `s u_s` consistent with the flux form: the average of the two
/// face values `s_f (u_R - u_L) / d_f`, with the Dirichlet value at `s = 1`.
pub fn apply_dissipation(u: &GridFn) -> GridFn {
    let mesh = u.mesh();
    let n = mesh.n_cells();
    let b = u.components();
    let faces = mesh.faces();
    let mut out = GridFn::zeros(mesh, b);
    for i in 0..n {
        for k in 0..b {
            let ui = u.get(i, k);
            let right = if i + 1 < n { u.get(i + 1, k) } else { 0.0 };
            let fr = faces[i + 1] * (right - ui) / mesh.face_distance(i + 1);
            let fl = if i > 0 {
                faces[i] * (ui - u.get(i - 1, k)) / mesh.face_distance(i)
            } else {
                0.0
            };
            out.set(i, k, 0.5 * (fr + fl));
        }
    }
    out
}

/// `Q(s_i, t) u_s(1, t)` at every center.
pub fn apply_localized(c: &Coefficients, u: &GridFn, t: f64) -> GridFn {
    let mesh = u.mesh();
    let b = u.components();
    let mut out = GridFn::zeros(mesh, b);
    if let Some(q) = c.q_centers(mesh, t) {
        let tr = boundary_deriv(u);
        for i in 0..mesh.n_cells() {
            for r in 0..b {
                let v = (0..b).map(|k| q[i * b * b + r * b + k] * tr[k]).sum();
                out.set(i, r, v);
            }
        }
    }
    out
}

/// Right-hand side `(A u')' + Q u'(1) + eps s v' + f` of the second-order system.
pub fn acceleration(c: &Coefficients, u: &GridFn, v: &GridFn, eps: f64, t: f64) -> GridFn {
    let mut acc = apply_flux_operator(c, u, t, None);
    acc.axpy(1.0, &apply_localized(c, u, t));
    if eps != 0.0 {
        acc.axpy(eps, &apply_dissipation(v));
    }
    acc.axpy(1.0, &c.f_centers(u.mesh(), t));
    acc
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolState {
    pub t: f64,
    #[serde(skip)]
    pub u: Option<GridFn>,
    #[serde(skip)]
    pub v: Option<GridFn>,
    pub trace: Vec<f64>,
}

impl EvolState {
    pub fn new(t: f64, u: GridFn, v: GridFn) -> EvolState {
        let trace = boundary_deriv(&u);
        EvolState {
            t,
            u: Some(u),
            v: Some(v),
            trace,
        }
    }

    pub fn u(&self) -> &GridFn {
        self.u.as_ref().expect("state without displacement")
    }

    pub fn v(&self) -> &GridFn {
        self.v.as_ref().expect("state without velocity")
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<EvolState>,
    pub dt: f64,
    pub snapshot_every: usize,
    pub eps: f64,
    pub label: String,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn snapshot_dt(&self) -> f64 {
        self.dt * self.snapshot_every as f64
    }

    pub fn last(&self) -> &EvolState {
        self.snapshots.last().expect("empty trajectory")
    }

    /// Rows `t, s, comp, u, v`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t,s,comp,u,v")?;
        for st in &self.snapshots {
            let (u, v) = (st.u(), st.v());
            for (i, s) in u.mesh().centers().iter().enumerate() {
                for c in 0..u.components() {
                    writeln!(
                        w,
                        "{:.16e},{:.16e},{},{:.16e},{:.16e}",
                        st.t,
                        s,
                        c,
                        u.get(i, c),
                        v.get(i, c)
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Rows `t, component, uprime_at_1`.
    pub fn write_trace_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t,component,uprime_at_1")?;
        for st in &self.snapshots {
            for (c, v) in st.trace.iter().enumerate() {
                writeln!(w, "{:.16e},{},{:.16e}", st.t, c, v)?;
            }
        }
        Ok(())
    }
}

/// `t -> u_s(1,t)` at the snapshot times, one series per component.
pub fn trace_series(traj: &Trajectory) -> Result<Vec<TimeSeries>> {
    let first = traj
        .snapshots
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let times = traj.times();
    (0..first.trace.len())
        .map(|c| TimeSeries::new(times.clone(), traj.snapshots.iter().map(|s| s.trace[c]).collect()))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Store every k-th step.
    pub snapshot_every: usize,
    /// Tolerance for `u0(1) = 0` and `u1(1) = 0`; `None` scales with the
    /// extrapolation error `h^3` of the boundary evaluation.
    pub compat_tol: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            snapshot_every: 1,
            compat_tol: None,
        }
    }
}

/// Boundary tolerance used when none is given: `1e-8`, widened by the
/// quadratic-extrapolation error for coarse meshes.
pub fn default_boundary_tol(u: &GridFn) -> f64 {
    let h = *u.mesh().spacings().last().unwrap();
    1e-8f64.max(16.0 * h.powi(3) * u.max_abs().max(1.0))
}

/// Number of steps of size `dt` that reach `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end > 0.0) || dt > t_end * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt <= T, got dt = {dt}, T = {t_end}"
        )));
    }
    Ok((t_end / dt).round().max(1.0) as usize)
}

/// One implicit-midpoint step at a time, reusing the factorization when the
/// coefficients do not depend on time.
pub struct Stepper<'a> {
    c: &'a Coefficients,
    mesh: Arc<Mesh>,
    dt: f64,
    eps: f64,
    cached: Option<LowRankCorrected>,
}

impl<'a> Stepper<'a> {
    pub fn new(c: &'a Coefficients, mesh: &Arc<Mesh>, dt: f64, eps: f64) -> Result<Stepper<'a>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if dt > 0.5 {
            log::warn!("dt = {dt} > 0.5: the scheme is stable but phase errors will be large");
        }
        let mut st = Stepper {
            c,
            mesh: mesh.clone(),
            dt,
            eps,
            cached: None,
        };
        if c.a.is_time_independent() && c.q.as_ref().is_none_or(|q| q.is_time_independent()) {
            st.cached = Some(st.assemble(0.0)?);
        }
        Ok(st)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `I - (dt^2/4)(L + Q l^T) - (eps dt/2) D` at time `t`.
    fn assemble(&self, t: f64) -> Result<LowRankCorrected> {
        let mesh = &self.mesh;
        let n = mesh.n_cells();
        let b = self.c.dim;
        let bb = b * b;
        let a = self.c.a_faces(mesh, t);
        let k = 0.25 * self.dt * self.dt;
        let e = 0.5 * self.eps * self.dt;
        let faces = mesh.faces();
        let mut m = BlockTridiag::zeros(n, b);
        for i in 0..n {
            let h = mesh.spacings()[i];
            let dl = mesh.face_distance(i);
            let dr = mesh.face_distance(i + 1);
            let al = &a[i * bb..(i + 1) * bb];
            let ar = &a[(i + 1) * bb..(i + 2) * bb];
            {
                let diag = m.diag_mut(i);
                for r in 0..b {
                    for col in 0..b {
                        diag[r * b + col] = k * (ar[r * b + col] / dr + al[r * b + col] / dl) / h;
                    }
                    diag[r * b + r] += 1.0 - e * 0.5 * (-faces[i + 1] / dr + if i > 0 { faces[i] / dl } else { 0.0 });
                }
            }
            if i > 0 {
                let lower = m.lower_mut(i);
                for r in 0..b {
                    for col in 0..b {
                        lower[r * b + col] = -k * al[r * b + col] / (h * dl);
                    }
                    lower[r * b + r] += e * 0.5 * faces[i] / dl;
                }
            }
            if i + 1 < n {
                let upper = m.upper_mut(i);
                for r in 0..b {
                    for col in 0..b {
                        upper[r * b + col] = -k * ar[r * b + col] / (h * dr);
                    }
                    upper[r * b + r] -= e * 0.5 * faces[i + 1] / dr;
                }
            }
        }
        let factor = m.factor().map_err(|err| Error::StepFailure {
            t,
            reason: err.to_string(),
        })?;
        let mut ucols = Vec::new();
        let mut vcols = Vec::new();
        if let Some(q) = self.c.q_centers(mesh, t) {
            if q.iter().any(|x| *x != 0.0) {
                let w = mesh.boundary_weights(1);
                for col in 0..b {
                    let mut ucol = vec![0.0; n * b];
                    for i in 0..n {
                        for r in 0..b {
                            ucol[i * b + r] = k * q[i * bb + r * b + col];
                        }
                    }
                    let mut vcol = vec![0.0; n * b];
                    for (j, wj) in w.iter().enumerate() {
                        vcol[(n - 3 + j) * b + col] = *wj;
                    }
                    ucols.push(ucol);
                    vcols.push(vcol);
                }
            }
        }
        LowRankCorrected::new(factor, ucols, vcols).map_err(|err| Error::StepFailure {
            t,
            reason: err.to_string(),
        })
    }

    /// Solves for the midpoint value `(u_n + u_{n+1}) / 2` of the step
    /// starting at `(t, u, v)`. `extra` is an additional forcing at `t + dt/2`.
    pub fn stage(&self, u: &GridFn, v: &GridFn, t: f64, extra: Option<&GridFn>) -> Result<GridFn> {
        let dt = self.dt;
        let tm = t + 0.5 * dt;
        let mut rhs = u.clone();
        rhs.axpy(0.5 * dt, v);
        if self.eps != 0.0 {
            rhs.axpy(-0.5 * self.eps * dt, &apply_dissipation(u));
        }
        if self.c.f.is_some() {
            rhs.axpy(0.25 * dt * dt, &self.c.f_centers(&self.mesh, tm));
        }
        if let Some(x) = extra {
            rhs.axpy(0.25 * dt * dt, x);
        }
        let sol = match &self.cached {
            Some(s) => s.solve(rhs.values()),
            None => self.assemble(tm)?.solve(rhs.values()),
        }
        .map_err(|err| Error::StepFailure {
            t,
            reason: err.to_string(),
        })?;
        GridFn::from_values(&self.mesh, u.components(), sol).map_err(|err| Error::StepFailure {
            t,
            reason: err.to_string(),
        })
    }

    /// `(u_{n+1}, v_{n+1})` from the midpoint value.
    pub fn finish(&self, u: &GridFn, v: &GridFn, mid: &GridFn) -> (GridFn, GridFn) {
        let u1 = GridFn::lin_comb(2.0, mid, -1.0, u);
        let mut v1 = GridFn::lin_comb(4.0 / self.dt, mid, -4.0 / self.dt, u);
        v1.axpy(-1.0, v);
        (u1, v1)
    }

    /// Midpoint velocity `(v_n + v_{n+1}) / 2 = 2 (mid - u_n) / dt`.
    pub fn mid_velocity(&self, u: &GridFn, mid: &GridFn) -> GridFn {
        GridFn::lin_comb(2.0 / self.dt, mid, -2.0 / self.dt, u)
    }
}

fn check_initial(u0: &GridFn, u1: &GridFn, dim: usize, tol: Option<f64>) -> Result<()> {
    if u0.components() != dim {
        return Err(Error::Mismatch(format!(
            "data has {} components, coefficients {dim}",
            u0.components()
        )));
    }
    u0.check_layout(u1)?;
    for (name, u) in [("u0", u0), ("u1", u1)] {
        let tol = tol.unwrap_or_else(|| default_boundary_tol(u));
        let r = boundary_value(u).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r > tol {
            return Err(Error::InvalidArgument(format!(
                "{name}(1) = {r:.3e} violates the boundary condition (tol {tol:.1e})"
            )));
        }
    }
    Ok(())
}

/// Solves the initial-boundary value problem on `[0, T]`.
pub fn solve_ibvp(c: &Coefficients, u0: &GridFn, u1: &GridFn, eps: f64, t_end: f64, dt: f64) -> Result<Trajectory> {
    solve_ibvp_with(c, u0, u1, eps, t_end, dt, &SolveOptions::default(), None)
}

/// Per-step extra forcing: given the step index, returns the forcing at the step midpoint.
pub type StepForcing<'a> = &'a (dyn Fn(usize) -> Option<GridFn> + Sync);

#[allow(clippy::too_many_arguments)]
pub fn solve_ibvp_with(
    c: &Coefficients,
    u0: &GridFn,
    u1: &GridFn,
    eps: f64,
    t_end: f64,
    dt: f64,
    opts: &SolveOptions,
    extra: Option<StepForcing<'_>>,
) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps must lie in [0, 1], got {eps}")));
    }
    check_initial(u0, u1, c.dim, opts.compat_tol)?;
    let steps = step_count(t_end, dt)?;
    let every = opts.snapshot_every.max(1);
    let stepper = Stepper::new(c, u0.mesh(), dt, eps)?;
    let mut u = u0.clone();
    let mut v = u1.clone();
    let mut snapshots = vec![EvolState::new(0.0, u.clone(), v.clone())];
    for k in 0..steps {
        let t = k as f64 * dt;
        let f = extra.and_then(|g| g(k));
        let mid = stepper.stage(&u, &v, t, f.as_ref())?;
        let (un, vn) = stepper.finish(&u, &v, &mid);
        u = un;
        v = vn;
        if (k + 1) % every == 0 || k + 1 == steps {
            snapshots.push(EvolState::new((k + 1) as f64 * dt, u.clone(), v.clone()));
        }
    }
    Ok(Trajectory {
        snapshots,
        dt,
        snapshot_every: every,
        eps,
        label: c.label.clone(),
    })
}

/// Result of a vanishing-viscosity study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonSweepReport {
    pub eps_list: Vec<f64>,
    pub reference_eps: Option<f64>,
    /// `(eps, max_t |||u^eps - u^ref|||_2)` for every entry but the reference.
    pub differences: Vec<(f64, f64)>,
    pub fitted_slope: Option<f64>,
}

/// Solves for every `eps` in a strictly decreasing list and compares each
/// solution with the last one in the jet norm of order 2.
pub fn epsilon_sweep(
    c: &Coefficients,
    u0: &GridFn,
    u1: &GridFn,
    eps_list: &[f64],
    t_end: f64,
    dt: f64,
    opts: &SolveOptions,
) -> Result<EpsilonSweepReport> {
    use rayon::prelude::*;
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("eps_list must be strictly decreasing".into()));
    }
    let tol = opts
        .compat_tol
        .unwrap_or_else(|| default_boundary_tol(u0).max(default_boundary_tol(u1)));
    let report = crate::compat::check_compat(&crate::norms::Jet::new(vec![u0.clone(), u1.clone()])?, 1, tol)?;
    if !report.passed {
        return Err(Error::InvalidArgument(format!(
            "data violate the compatibility conditions up to order 1: residuals {:?}",
            report.residuals
        )));
    }
    if eps_list.len() < 2 {
        return Ok(EpsilonSweepReport {
            eps_list: eps_list.to_vec(),
            reference_eps: eps_list.first().copied(),
            differences: vec![],
            fitted_slope: None,
        });
    }
    let trajs = eps_list
        .par_iter()
        .map(|&e| solve_ibvp_with(c, u0, u1, e, t_end, dt, opts, None))
        .collect::<Result<Vec<_>>>()?;
    let reference = trajs.last().unwrap();
    let ref_jets = crate::energy::trajectory_jets(reference)?;
    let mut differences = Vec::new();
    for (e, tr) in eps_list.iter().zip(&trajs).take(eps_list.len() - 1) {
        let jets = crate::energy::trajectory_jets(tr)?;
        let mut worst: f64 = 0.0;
        for (a, b) in jets.iter().zip(&ref_jets) {
            worst = worst.max(crate::norms::jet_norm(&a.difference(b)?, 2, 2)?);
        }
        differences.push((*e, worst));
    }
    let fitted_slope = crate::analysis::loglog_slope(
        &differences.iter().map(|d| d.0).collect::<Vec<_>>(),
        &differences.iter().map(|d| d.1).collect::<Vec<_>>(),
    );
    Ok(EpsilonSweepReport {
        eps_list: eps_list.to_vec(),
        reference_eps: eps_list.last().copied(),
        differences,
        fitted_slope,
    })
}
