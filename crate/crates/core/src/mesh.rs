//! Cell-centered discretization of the unit interval.
//!
//! The left face sits exactly at `s = 0`, where the coefficient of the
//! principal part vanishes, so no boundary condition is ever imposed there.
//! All quadrature is midpoint quadrature at cell centers, which keeps weights
//! `s^alpha` away from the origin.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Highest spatial derivative order supported by the stencils.
pub const MAX_DERIVATIVE_ORDER: usize = 4;

#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    start: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct Mesh {
    n_cells: usize,
    faces: Vec<f64>,
    centers: Vec<f64>,
    spacings: Vec<f64>,
    grading: f64,
    stencils: [OnceLock<Stencil>; MAX_DERIVATIVE_ORDER],
    boundary: [OnceLock<Vec<f64>>; 2],
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.n_cells == other.n_cells && self.faces == other.faces
    }
}

/// Builds the mesh with faces `(i/n)^grading`.
pub fn make_mesh(n: usize, grading: f64) -> Result<Arc<Mesh>> {
    Mesh::new(n, grading).map(Arc::new)
}

impl Mesh {
    pub fn new(n: usize, grading: f64) -> Result<Mesh> {
        if n < 4 {
            return Err(Error::InvalidMesh(format!("need at least 4 cells, got {n}")));
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(Error::InvalidMesh(format!(
                "grading exponent must be >= 1, got {grading}"
            )));
        }
        let mut faces: Vec<f64> = (0..=n).map(|i| (i as f64 / n as f64).powf(grading)).collect();
        faces[0] = 0.0;
        faces[n] = 1.0;
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let spacings = faces.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Mesh {
            n_cells: n,
            faces,
            centers,
            spacings,
            grading,
            stencils: Default::default(),
            boundary: Default::default(),
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn is_uniform(&self) -> bool {
        self.grading == 1.0
    }

    /// Distance between the centers adjacent to face `f`. The outer faces use
    /// the half-cell distance to the boundary itself.
    pub fn face_distance(&self, f: usize) -> f64 {
        let n = self.n_cells;
        if f == 0 {
            self.centers[0]
        } else if f == n {
            1.0 - self.centers[n - 1]
        } else {
            self.centers[f] - self.centers[f - 1]
        }
    }

    pub(crate) fn stencil(&self, k: usize) -> &Stencil {
        self.stencils[k - 1].get_or_init(|| build_stencil(&self.centers, k))
    }

    /// Weights on the last three centers that produce the value (`order = 0`)
    /// or the first derivative (`order = 1`) of the interpolating quadratic at `s = 1`.
    pub fn boundary_weights(&self, order: usize) -> &[f64] {
        assert!(order <= 1);
        self.boundary[order].get_or_init(|| {
            let n = self.n_cells;
            fd_weights(1.0, &self.centers[n - 3..], order)
        })
    }
}

fn build_stencil(xs: &[f64], k: usize) -> Stencil {
    let n = xs.len();
    let interior = if k.is_multiple_of(2) { k + 1 } else { k + 2 };
    let half = interior / 2;
    let one_sided = k + 2;
    let mut start = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, len) = if i >= half && i + half < n {
            (i - half, interior)
        } else if i < half {
            (0, one_sided.min(n))
        } else {
            (n - one_sided.min(n), one_sided.min(n))
        };
        start.push(lo);
        weights.push(fd_weights(xs[i], &xs[lo..lo + len], k));
    }
    Stencil { start, weights }
}

/// Finite-difference weights for the `order`-th derivative at `x0` on the
/// nodes `xs` (Fornberg's recursion).
pub fn fd_weights(x0: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n > order, "need more nodes than the derivative order");
    let m = order;
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// A vector-valued function sampled at the cell centers of a [`Mesh`].
///
/// Values are stored cell-major: component `c` of cell `i` lives at `i * N + c`.
#[derive(Debug, Clone)]
pub struct GridFn {
    mesh: Arc<Mesh>,
    components: usize,
    values: Vec<f64>,
}

impl GridFn {
    pub fn zeros(mesh: &Arc<Mesh>, components: usize) -> GridFn {
        assert!(components >= 1);
        GridFn {
            mesh: mesh.clone(),
            components,
            values: vec![0.0; mesh.n_cells() * components],
        }
    }

    pub fn from_values(mesh: &Arc<Mesh>, components: usize, values: Vec<f64>) -> Result<GridFn> {
        if components == 0 || values.len() != mesh.n_cells() * components {
            return Err(Error::Mismatch(format!(
                "{} values for {} cells x {} components",
                values.len(),
                mesh.n_cells(),
                components
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function"));
        }
        Ok(GridFn {
            mesh: mesh.clone(),
            components,
            values,
        })
    }

    pub fn from_scalar_fn(mesh: &Arc<Mesh>, f: impl Fn(f64) -> f64) -> GridFn {
        let values = mesh.centers().iter().map(|&s| f(s)).collect();
        GridFn {
            mesh: mesh.clone(),
            components: 1,
            values,
        }
    }

    /// Samples `f(s, out)` which writes all components of the value at `s`.
    pub fn from_fn(mesh: &Arc<Mesh>, components: usize, f: impl Fn(f64, &mut [f64])) -> GridFn {
        let mut g = GridFn::zeros(mesh, components);
        for (i, &s) in mesh.centers().iter().enumerate() {
            f(s, &mut g.values[i * components..(i + 1) * components]);
        }
        g
    }

    /// Scalar profile times a constant direction vector.
    pub fn from_profile(mesh: &Arc<Mesh>, direction: &[f64], f: impl Fn(f64) -> f64) -> GridFn {
        let n = direction.len();
        GridFn::from_fn(mesh, n, |s, out| {
            let p = f(s);
            for (o, d) in out.iter_mut().zip(direction) {
                *o = p * d;
            }
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, cell: usize, comp: usize) -> f64 {
        self.values[cell * self.components + comp]
    }

    pub fn set(&mut self, cell: usize, comp: usize, v: f64) {
        self.values[cell * self.components + comp] = v;
    }

    pub fn cell(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.components..(cell + 1) * self.components]
    }

    pub fn component(&self, comp: usize) -> GridFn {
        let values = self
            .values
            .iter()
            .skip(comp)
            .step_by(self.components)
            .copied()
            .collect();
        GridFn {
            mesh: self.mesh.clone(),
            components: 1,
            values,
        }
    }

    /// Pointwise Euclidean magnitude over components.
    pub fn magnitude(&self) -> Vec<f64> {
        self.values
            .chunks(self.components)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    pub fn same_layout(&self, other: &GridFn) -> bool {
        self.components == other.components && (Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh)
    }

    pub fn check_layout(&self, other: &GridFn) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Mismatch(
                "grid functions live on different meshes or component counts".into(),
            ))
        }
    }

    pub fn scaled(&self, c: f64) -> GridFn {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &GridFn) {
        debug_assert!(self.same_layout(other));
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn lin_comb(a: f64, x: &GridFn, b: f64, y: &GridFn) -> GridFn {
        debug_assert!(x.same_layout(y));
        let values = x.values.iter().zip(&y.values).map(|(p, q)| a * p + b * q).collect();
        GridFn {
            mesh: x.mesh.clone(),
            components: x.components,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn {
            mesh: self.mesh.clone(),
            components: self.components,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add<&GridFn> for &GridFn {
    type Output = GridFn;
    fn add(self, rhs: &GridFn) -> GridFn {
        GridFn::lin_comb(1.0, self, 1.0, rhs)
    }
}

impl std::ops::Sub<&GridFn> for &GridFn {
    type Output = GridFn;
    fn sub(self, rhs: &GridFn) -> GridFn {
        GridFn::lin_comb(1.0, self, -1.0, rhs)
    }
}

/// `k`-th spatial derivative at the cell centers: centered stencils in the
/// interior, one-sided stencils of the same order near both ends.
pub fn derivative(u: &GridFn, k: usize) -> Result<GridFn> {
    if k == 0 {
        return Ok(u.clone());
    }
    if k > MAX_DERIVATIVE_ORDER {
        return Err(Error::UnsupportedOrder {
            order: k,
            max: MAX_DERIVATIVE_ORDER,
        });
    }
    let n = u.n_cells();
    if n < k + 2 {
        return Err(Error::InvalidMesh(format!(
            "{n} cells are too few for a derivative of order {k}"
        )));
    }
    let st = u.mesh.stencil(k);
    let nc = u.components;
    let mut out = GridFn::zeros(&u.mesh, nc);
    for i in 0..n {
        let lo = st.start[i];
        for (j, w) in st.weights[i].iter().enumerate() {
            let src = &u.values[(lo + j) * nc..(lo + j + 1) * nc];
            let dst = &mut out.values[i * nc..(i + 1) * nc];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    Ok(out)
}

/// Weighted Lebesgue norm `||s^alpha |u| ||_{L^p}` by midpoint quadrature;
/// `p = f64::INFINITY` gives the maximum over centers.
pub fn integrate_weighted(u: &GridFn, alpha: f64, p: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidWeight(alpha));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let mesh = u.mesh();
    let mag = u.magnitude();
    if p.is_infinite() {
        return Ok(mesh
            .centers()
            .iter()
            .zip(&mag)
            .map(|(s, m)| s.powf(alpha) * m)
            .fold(0.0, f64::max));
    }
    let sum: f64 = mesh
        .centers()
        .iter()
        .zip(mesh.spacings())
        .zip(&mag)
        .map(|((s, h), m)| h * (s.powf(alpha) * m).powf(p))
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// Squared weighted L2 norm `||s^alpha u||^2` summed over components.
pub(crate) fn weighted_l2_sq(u: &GridFn, alpha: f64) -> f64 {
    let mesh = u.mesh();
    let nc = u.components();
    mesh.centers()
        .iter()
        .zip(mesh.spacings())
        .enumerate()
        .map(|(i, (s, h))| {
            let w = if alpha == 0.0 { 1.0 } else { s.powf(2.0 * alpha) };
            let sq: f64 = u.values()[i * nc..(i + 1) * nc].iter().map(|v| v * v).sum();
            h * w * sq
        })
        .sum()
}

/// Midpoint-rule inner product `(u, v)_{L^2}` summed over components.
pub fn inner(u: &GridFn, v: &GridFn) -> f64 {
    let mesh = u.mesh();
    let nc = u.components();
    mesh.spacings()
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let a = &u.values()[i * nc..(i + 1) * nc];
            let b = &v.values()[i * nc..(i + 1) * nc];
            h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
        })
        .sum()
}

/// Derivative at `s = 1` of the quadratic through the last three centers.
pub fn boundary_deriv(u: &GridFn) -> Vec<f64> {
    boundary_eval(u, 1)
}

/// Value at `s = 1` of the quadratic through the last three centers.
pub fn boundary_value(u: &GridFn) -> Vec<f64> {
    boundary_eval(u, 0)
}

fn boundary_eval(u: &GridFn, order: usize) -> Vec<f64> {
    let mesh = u.mesh();
    let n = mesh.n_cells();
    let w = mesh.boundary_weights(order);
    let nc = u.components();
    let mut out = vec![0.0; nc];
    for (j, wj) in w.iter().enumerate() {
        let cell = u.cell(n - 3 + j);
        for (o, v) in out.iter_mut().zip(cell) {
            *o += wj * v;
        }
    }
    out
}
