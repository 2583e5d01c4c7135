//! Block tridiagonal factorization with an optional low-rank correction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Square block tridiagonal matrix with `n` block rows of size `b x b`,
/// stored row-major per block.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    n: usize,
    b: usize,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl BlockTridiag {
    pub fn zeros(n: usize, b: usize) -> BlockTridiag {
        BlockTridiag {
            n,
            b,
            lower: vec![0.0; n * b * b],
            diag: vec![0.0; n * b * b],
            upper: vec![0.0; n * b * b],
        }
    }

    pub fn block_rows(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    /// Block coupling row `i` to row `i - 1`.
    pub fn lower_mut(&mut self, i: usize) -> &mut [f64] {
        let bb = self.b * self.b;
        &mut self.lower[i * bb..(i + 1) * bb]
    }

    pub fn diag_mut(&mut self, i: usize) -> &mut [f64] {
        let bb = self.b * self.b;
        &mut self.diag[i * bb..(i + 1) * bb]
    }

    /// Block coupling row `i` to row `i + 1`.
    pub fn upper_mut(&mut self, i: usize) -> &mut [f64] {
        let bb = self.b * self.b;
        &mut self.upper[i * bb..(i + 1) * bb]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (n, b) = (self.n, self.b);
        let bb = b * b;
        let mut y = vec![0.0; n * b];
        for i in 0..n {
            let yi = &mut y[i * b..(i + 1) * b];
            gemv_add(&self.diag[i * bb..(i + 1) * bb], &x[i * b..(i + 1) * b], yi);
            if i > 0 {
                gemv_add(&self.lower[i * bb..(i + 1) * bb], &x[(i - 1) * b..i * b], yi);
            }
            if i + 1 < n {
                gemv_add(&self.upper[i * bb..(i + 1) * bb], &x[(i + 1) * b..(i + 2) * b], yi);
            }
        }
        y
    }

    /// Block Thomas factorization (no pivoting between blocks).
    pub fn factor(&self) -> Result<BlockTridiagFactor> {
        let (n, b) = (self.n, self.b);
        let bb = b * b;
        let mut inv_piv = vec![0.0; n * bb];
        let mut c = vec![0.0; n * bb];
        let mut piv = self.diag[0..bb].to_vec();
        for i in 0..n {
            if i > 0 {
                // piv = D_i - L_i * C_{i-1}
                piv.copy_from_slice(&self.diag[i * bb..(i + 1) * bb]);
                let prod = gemm(&self.lower[i * bb..(i + 1) * bb], &c[(i - 1) * bb..i * bb], b);
                for (p, q) in piv.iter_mut().zip(prod) {
                    *p -= q;
                }
            }
            let inv = invert(&piv, b)
                .ok_or_else(|| Error::SolverFailure(format!("singular pivot block at row {i} of {n}")))?;
            if i + 1 < n {
                let ci = gemm(&inv, &self.upper[i * bb..(i + 1) * bb], b);
                c[i * bb..(i + 1) * bb].copy_from_slice(&ci);
            }
            inv_piv[i * bb..(i + 1) * bb].copy_from_slice(&inv);
        }
        Ok(BlockTridiagFactor {
            n,
            b,
            lower: self.lower.clone(),
            inv_piv,
            c,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BlockTridiagFactor {
    n: usize,
    b: usize,
    lower: Vec<f64>,
    inv_piv: Vec<f64>,
    c: Vec<f64>,
}

impl BlockTridiagFactor {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, b) = (self.n, self.b);
        let bb = b * b;
        assert_eq!(rhs.len(), n * b);
        let mut y = vec![0.0; n * b];
        let mut tmp = vec![0.0; b];
        for i in 0..n {
            tmp.copy_from_slice(&rhs[i * b..(i + 1) * b]);
            if i > 0 {
                let prev = y[(i - 1) * b..i * b].to_vec();
                gemv_sub(&self.lower[i * bb..(i + 1) * bb], &prev, &mut tmp);
            }
            let yi = &mut y[i * b..(i + 1) * b];
            yi.iter_mut().for_each(|v| *v = 0.0);
            gemv_add(&self.inv_piv[i * bb..(i + 1) * bb], &tmp, yi);
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let next = y[(i + 1) * b..(i + 2) * b].to_vec();
            gemv_sub(&self.c[i * bb..(i + 1) * bb], &next, &mut y[i * b..(i + 1) * b]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure("non-finite solution".into()));
        }
        Ok(y)
    }
}

/// Solver for `T - U V^T` where `T` is block tridiagonal and `U`, `V` have
/// `k` columns (stored column-major, each column of length `n * b`).
#[derive(Debug, Clone)]
pub struct LowRankCorrected {
    base: BlockTridiagFactor,
    tinv_u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    capacitance_inv: DMatrix<f64>,
}

impl LowRankCorrected {
    pub fn new(base: BlockTridiagFactor, u: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<LowRankCorrected> {
        assert_eq!(u.len(), v.len());
        let k = u.len();
        let tinv_u = u.iter().map(|col| base.solve(col)).collect::<Result<Vec<_>>>()?;
        // I - V^T T^{-1} U
        let mut cap = DMatrix::<f64>::identity(k, k);
        for r in 0..k {
            for c in 0..k {
                cap[(r, c)] -= dot(&v[r], &tinv_u[c]);
            }
        }
        let capacitance_inv = cap
            .try_inverse()
            .ok_or_else(|| Error::SolverFailure("singular low-rank capacitance matrix".into()))?;
        Ok(LowRankCorrected {
            base,
            tinv_u,
            v,
            capacitance_inv,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.base.solve(rhs)?;
        let k = self.v.len();
        if k == 0 {
            return Ok(y);
        }
        let vy: Vec<f64> = self.v.iter().map(|col| dot(col, &y)).collect();
        for (c, z) in self.tinv_u.iter().enumerate() {
            let coef: f64 = (0..k).map(|r| self.capacitance_inv[(c, r)] * vy[r]).sum();
            if coef != 0.0 {
                for (yi, zi) in y.iter_mut().zip(z) {
                    *yi += coef * zi;
                }
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure("non-finite solution".into()));
        }
        Ok(y)
    }
}

/// Thomas algorithm for a scalar tridiagonal system; `lower[0]` and
/// `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut denom = diag[0];
    for i in 0..n {
        if i > 0 {
            denom = diag[i] - lower[i] * cp[i - 1];
        }
        if !(denom.abs() > 1e-300) || !denom.is_finite() {
            return Err(Error::SolverFailure(format!("zero pivot at row {i} of {n}")));
        }
        cp[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        dp[i] = (rhs[i] - if i > 0 { lower[i] * dp[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        dp[i] -= cp[i] * dp[i + 1];
    }
    Ok(dp)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gemv_add(m: &[f64], x: &[f64], y: &mut [f64]) {
    let b = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        *yr += dot(&m[r * b..(r + 1) * b], x);
    }
}

fn gemv_sub(m: &[f64], x: &[f64], y: &mut [f64]) {
    let b = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        *yr -= dot(&m[r * b..(r + 1) * b], x);
    }
}

fn gemm(a: &[f64], c: &[f64], b: usize) -> Vec<f64> {
    let mut out = vec![0.0; b * b];
    for r in 0..b {
        for k in 0..b {
            let ark = a[r * b + k];
            if ark != 0.0 {
                for col in 0..b {
                    out[r * b + col] += ark * c[k * b + col];
                }
            }
        }
    }
    out
}

fn invert(m: &[f64], b: usize) -> Option<Vec<f64>> {
    if b == 1 {
        let v = m[0];
        return (v.abs() > 1e-300 && v.is_finite()).then(|| vec![1.0 / v]);
    }
    let inv = DMatrix::from_row_slice(b, b, m).try_inverse()?;
    if inv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(inv.transpose().as_slice().to_vec())
}
