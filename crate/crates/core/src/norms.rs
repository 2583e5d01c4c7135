//! Weighted Sobolev norms `X^m`, `Y^m`, jet norms, the averaging operator
//! and exponentially weighted time functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{derivative, weighted_l2_sq, GridFn};

pub const MAX_X_ORDER: usize = 4;
pub const MAX_Y_ORDER: usize = 3;

/// The time-derivative stack `(u, d_t u, ..., d_t^l u)` at a single time.
#[derive(Debug, Clone)]
pub struct Jet {
    entries: Vec<GridFn>,
}

impl Jet {
    pub fn new(entries: Vec<GridFn>) -> Result<Jet> {
        let first = entries
            .first()
            .ok_or_else(|| Error::InvalidArgument("a jet needs at least one entry".into()))?;
        for e in &entries[1..] {
            first.check_layout(e)?;
        }
        Ok(Jet { entries })
    }

    pub fn zeros(like: &GridFn, order: usize) -> Jet {
        let z = GridFn::zeros(like.mesh(), like.components());
        Jet {
            entries: vec![z; order + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entry(&self, j: usize) -> &GridFn {
        &self.entries[j]
    }

    pub fn entries(&self) -> &[GridFn] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<GridFn> {
        self.entries
    }

    pub fn scaled(&self, c: f64) -> Jet {
        Jet {
            entries: self.entries.iter().map(|e| e.scaled(c)).collect(),
        }
    }

    pub fn difference(&self, other: &Jet) -> Result<Jet> {
        if self.order() != other.order() {
            return Err(Error::Mismatch("jets of different order".into()));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| {
                a.check_layout(b)?;
                Ok(a - b)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Jet { entries })
    }
}

/// Scalar samples on a time grid starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<TimeSeries> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Mismatch(format!(
                "{} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument("time series must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "time samples must be strictly increasing".into(),
            ));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series"));
        }
        Ok(TimeSeries { times, values })
    }

    /// Samples `f` at `k * dt` for `k = 0..=steps`.
    pub fn sample(dt: f64, steps: usize, f: impl Fn(f64) -> f64) -> Result<TimeSeries> {
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        TimeSeries::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise sum; both series must share their sample times.
    pub fn add(&self, other: &TimeSeries) -> Result<TimeSeries> {
        if self.times != other.times {
            return Err(Error::Mismatch("time series on different grids".into()));
        }
        Ok(TimeSeries {
            times: self.times.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    /// Restriction to the samples with `t <= t_end`.
    pub fn truncated(&self, t_end: f64) -> TimeSeries {
        let k = self.times.iter().take_while(|&&t| t <= t_end).count().max(1);
        TimeSeries {
            times: self.times[..k].to_vec(),
            values: self.values[..k].to_vec(),
        }
    }

    /// Second-order time derivative: centered inside, one-sided at both ends.
    pub fn derivative(&self) -> TimeSeries {
        let n = self.len();
        let (t, v) = (&self.times, &self.values);
        let mut d = vec![0.0; n];
        if n >= 3 {
            for k in 1..n - 1 {
                d[k] = crate::mesh::fd_weights(t[k], &t[k - 1..k + 2], 1)
                    .iter()
                    .zip(&v[k - 1..k + 2])
                    .map(|(w, x)| w * x)
                    .sum();
            }
            let w0 = crate::mesh::fd_weights(t[0], &t[0..3], 1);
            d[0] = w0.iter().zip(&v[0..3]).map(|(w, x)| w * x).sum();
            let wn = crate::mesh::fd_weights(t[n - 1], &t[n - 3..n], 1);
            d[n - 1] = wn.iter().zip(&v[n - 3..n]).map(|(w, x)| w * x).sum();
        } else if n == 2 {
            let s = (v[1] - v[0]) / (t[1] - t[0]);
            d = vec![s, s];
        }
        TimeSeries {
            times: self.times.clone(),
            values: d,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

fn trapezoid(times: &[f64], integrand: impl Fn(usize) -> f64) -> f64 {
    times
        .windows(2)
        .enumerate()
        .map(|(k, w)| 0.5 * (w[1] - w[0]) * (integrand(k) + integrand(k + 1)))
        .sum()
}

/// `sup_k e^{-gamma t_k} |f(t_k)|`
pub fn sup_gamma(f: &TimeSeries, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(f.times
        .iter()
        .zip(&f.values)
        .map(|(t, v)| (-gamma * t).exp() * v.abs())
        .fold(0.0, f64::max))
}

/// `|f|_{L^2_gamma} = (int e^{-2 gamma t} |f|^2 dt)^{1/2}` by the trapezoid rule.
pub fn l2_gamma(f: &TimeSeries, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let t = &f.times;
    let v = &f.values;
    Ok(trapezoid(t, |k| (-2.0 * gamma * t[k]).exp() * v[k] * v[k]).sqrt())
}

/// `|f|_{L^1_gamma} = int e^{-gamma t} |f| dt` by the trapezoid rule.
pub fn l1_gamma(f: &TimeSeries, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let t = &f.times;
    let v = &f.values;
    Ok(trapezoid(t, |k| (-gamma * t[k]).exp() * v[k].abs()))
}

/// `|f|_{H^1_gamma} = (|f|^2_{L^2_gamma} + |f'|^2_{L^2_gamma})^{1/2}`, with the
/// derivative taken by finite differences on the sample times.
pub fn h1_gamma(f: &TimeSeries, gamma: f64) -> Result<f64> {
    let a = l2_gamma(f, gamma)?;
    let b = l2_gamma(&f.derivative(), gamma)?;
    Ok((a * a + b * b).sqrt())
}

/// `I_{gamma,t}(f)`: weighted supremum plus `sqrt(gamma)` times the weighted L2 norm.
pub fn igamma(f: &TimeSeries, gamma: f64) -> Result<f64> {
    Ok(sup_gamma(f, gamma)? + gamma.sqrt() * l2_gamma(f, gamma)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActiveBound {
    #[serde(rename = "L1_gamma")]
    L1,
    #[serde(rename = "L2_gamma")]
    L2,
}

impl std::fmt::Display for ActiveBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActiveBound::L1 => write!(f, "L1_gamma"),
            ActiveBound::L2 => write!(f, "L2_gamma"),
        }
    }
}

/// Upper bound for the dual time norm, together with the bound that attained it.
///
/// This is `min(|f|_{L^1_gamma}, gamma^{-1/2} |f|_{L^2_gamma})`; the dual norm
/// itself is never computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SstarBound {
    pub value: f64,
    pub active: ActiveBound,
}

pub fn sstar_bound(f: &TimeSeries, gamma: f64) -> Result<SstarBound> {
    let l1 = l1_gamma(f, gamma)?;
    let l2 = l2_gamma(f, gamma)? / gamma.sqrt();
    Ok(if l1 <= l2 {
        SstarBound {
            value: l1,
            active: ActiveBound::L1,
        }
    } else {
        SstarBound {
            value: l2,
            active: ActiveBound::L2,
        }
    })
}

pub fn sstar_upper(f: &TimeSeries, gamma: f64) -> Result<f64> {
    sstar_bound(f, gamma).map(|b| b.value)
}

fn l2_sq(u: &GridFn) -> f64 {
    weighted_l2_sq(u, 0.0)
}

/// Squared `Y^m` norm.
fn ynorm_sq(u: &GridFn, m: usize) -> Result<f64> {
    if m > MAX_Y_ORDER {
        return Err(Error::UnsupportedOrder {
            order: m,
            max: MAX_Y_ORDER,
        });
    }
    if m == 0 {
        return Ok(weighted_l2_sq(u, 0.5));
    }
    // m = 2k+1: H^k plus sum_{j=1}^{k+1} |s^j d^{k+j} u|^2
    // m = 2k+2: H^k plus sum_{j=1}^{k+2} |s^{j-1/2} d^{k+j} u|^2
    let k = (m - 1) / 2;
    let odd = m % 2 == 1;
    let top = if odd { k + 1 } else { k + 2 };
    let mut derivs = vec![u.clone()];
    for order in 1..=k + top {
        derivs.push(derivative(u, order)?);
    }
    let mut total = 0.0;
    for d in derivs.iter().take(k + 1) {
        total += l2_sq(d);
    }
    for j in 1..=top {
        let w = if odd { j as f64 } else { j as f64 - 0.5 };
        total += weighted_l2_sq(&derivs[k + j], w);
    }
    Ok(total)
}

/// `||u||_{Y^m}` for `m <= 3`; vector functions contribute the sum of squares of components.
pub fn ynorm(u: &GridFn, m: usize) -> Result<f64> {
    ynorm_sq(u, m).map(f64::sqrt)
}

/// `||u||_{X^m}` for `m <= 4`.
///
/// Evaluated through `||u||^2_{X^{m+1}} = ||u||^2 + ||u'||^2_{Y^m}`, so the
/// derivative stencils inside the `Y` norm are the ones applied to `u'`.
pub fn xnorm(u: &GridFn, m: usize) -> Result<f64> {
    if m > MAX_X_ORDER {
        return Err(Error::UnsupportedOrder {
            order: m,
            max: MAX_X_ORDER,
        });
    }
    if m == 0 {
        return Ok(l2_sq(u).sqrt());
    }
    let du = derivative(u, 1)?;
    Ok((l2_sq(u) + ynorm_sq(&du, m - 1)?).sqrt())
}

/// `|||u|||_{m,l} = (sum_{j<=l} ||d_t^j u||^2_{X^{m-j}})^{1/2}`
pub fn jet_norm(jet: &Jet, m: usize, l: usize) -> Result<f64> {
    if jet.order() < l {
        return Err(Error::InsufficientJet {
            have: jet.order(),
            need: l,
        });
    }
    if l > m {
        return Err(Error::InvalidArgument(format!(
            "jet norm needs l <= m, got l = {l}, m = {m}"
        )));
    }
    let mut total = 0.0;
    for j in 0..=l {
        let x = xnorm(jet.entry(j), m - j)?;
        total += x * x;
    }
    Ok(total.sqrt())
}

/// `|||u|||_{m,*} = |||u|||_{m,m-1}`, zero for `m = 0` by convention.
pub fn jet_norm_star(jet: &Jet, m: usize) -> Result<f64> {
    if m == 0 {
        Ok(0.0)
    } else {
        jet_norm(jet, m, m - 1)
    }
}

/// `|||u|||^dagger_m = sum_{j<=m} ||d_t^j u||_{Y^{m-j}}` (a plain sum, not root-sum-square).
pub fn dagger_jet_norm(jet: &Jet, m: usize) -> Result<f64> {
    if jet.order() < m {
        return Err(Error::InsufficientJet {
            have: jet.order(),
            need: m,
        });
    }
    (0..=m).map(|j| ynorm(jet.entry(j), m - j)).sum()
}

/// `(M u)(s) = s^{-1} int_0^s u`, sampled at centers.
///
/// Full cells use the midpoint rule; the partial cell `[f_i, s_i]` uses the
/// midpoint rule with the value at its midpoint reconstructed from the local slope.
pub fn apply_averaging(u: &GridFn) -> Result<GridFn> {
    let mesh = u.mesh().clone();
    let nc = u.components();
    let slope = derivative(u, 1)?;
    let mut out = GridFn::zeros(&mesh, nc);
    let mut acc = vec![0.0; nc];
    for i in 0..mesh.n_cells() {
        let h = mesh.spacings()[i];
        let s = mesh.centers()[i];
        let half = s - mesh.faces()[i];
        for (c, a) in acc.iter_mut().enumerate() {
            let mid = u.get(i, c) - 0.5 * half * slope.get(i, c);
            out.set(i, c, (*a + half * mid) / s);
            *a += h * u.get(i, c);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_mesh;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_function_norms() {
        let m = make_mesh(32, 1.0).unwrap();
        let z = GridFn::zeros(&m, 2);
        for k in 0..=4 {
            assert_eq!(xnorm(&z, k).unwrap(), 0.0);
        }
        for k in 0..=3 {
            assert_eq!(ynorm(&z, k).unwrap(), 0.0);
        }
        assert!(matches!(xnorm(&z, 5), Err(Error::UnsupportedOrder { .. })));
        assert!(matches!(ynorm(&z, 4), Err(Error::UnsupportedOrder { .. })));
    }

    #[test]
    fn analytic_values() {
        let m = make_mesh(512, 1.0).unwrap();
        let one = GridFn::from_scalar_fn(&m, |_| 1.0);
        assert_abs_diff_eq!(xnorm(&one, 0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ynorm(&one, 0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-4);
        let lin = GridFn::from_scalar_fn(&m, |s| s);
        assert_abs_diff_eq!(xnorm(&lin, 2).unwrap(), (4.0f64 / 3.0).sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn identity_between_x_and_y() {
        let m = make_mesh(128, 1.0).unwrap();
        let u = GridFn::from_scalar_fn(&m, |s| s * s);
        let du = derivative(&u, 1).unwrap();
        for k in 0..=3 {
            let lhs = xnorm(&u, k + 1).unwrap().powi(2);
            let rhs = xnorm(&u, 0).unwrap().powi(2) + ynorm(&du, k).unwrap().powi(2);
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.max(1.0));
        }
    }

    #[test]
    fn jet_norms() {
        let m = make_mesh(512, 1.0).unwrap();
        let u = GridFn::from_scalar_fn(&m, |s| s);
        let v = GridFn::from_scalar_fn(&m, |_| 1.0);
        let jet = Jet::new(vec![u.clone(), v.clone()]).unwrap();
        assert_abs_diff_eq!(
            jet_norm(&jet, 2, 1).unwrap(),
            (4.0f64 / 3.0 + 1.0).sqrt(),
            epsilon = 1e-3
        );
        assert_abs_diff_eq!(jet_norm(&jet, 3, 0).unwrap(), xnorm(&u, 3).unwrap(), epsilon = 1e-15);
        assert!(matches!(jet_norm(&jet, 3, 2), Err(Error::InsufficientJet { .. })));
        assert_eq!(jet_norm_star(&jet, 0).unwrap(), 0.0);
        // ||1||_{Y^1} = 1 and ||1||_{Y^0} = sqrt(1/2)
        let ones = Jet::new(vec![v.clone(), v]).unwrap();
        assert_abs_diff_eq!(dagger_jet_norm(&ones, 1).unwrap(), 1.0 + 0.5f64.sqrt(), epsilon = 1e-3);
        let z = Jet::zeros(&u, 2);
        assert_eq!(jet_norm(&z, 2, 2).unwrap(), 0.0);
        assert_eq!(dagger_jet_norm(&z, 2).unwrap(), 0.0);
    }

    #[test]
    fn averaging_examples() {
        let m = make_mesh(64, 1.0).unwrap();
        let one = GridFn::from_scalar_fn(&m, |_| 1.0);
        let a = apply_averaging(&one).unwrap();
        assert!(a.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
        let lin = GridFn::from_scalar_fn(&m, |s| s);
        let a = apply_averaging(&lin).unwrap();
        for (s, v) in m.centers().iter().zip(a.values()) {
            assert_abs_diff_eq!(*v, s / 2.0, epsilon = 1e-12);
        }
        assert_eq!(apply_averaging(&GridFn::zeros(&m, 1)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn time_functionals_closed_forms() {
        let (gamma, t_end, steps) = (2.0, 1.5, 20000);
        let f = TimeSeries::sample(t_end / steps as f64, steps, |_| 1.0).unwrap();
        let expect = 1.0 + ((1.0 - (-2.0 * gamma * t_end).exp()) / 2.0).sqrt();
        assert_abs_diff_eq!(igamma(&f, gamma).unwrap(), expect, epsilon = 1e-6);
        let l1 = (1.0 - (-gamma * t_end).exp()) / gamma;
        let l2 = ((1.0 - (-2.0 * gamma * t_end).exp()) / (2.0 * gamma)).sqrt() / gamma.sqrt();
        assert_abs_diff_eq!(sstar_upper(&f, gamma).unwrap(), l1.min(l2), epsilon = 1e-6);
        let big = igamma(&f, 200.0).unwrap();
        assert_abs_diff_eq!(big, 1.0 + 0.5f64.sqrt(), epsilon = 1e-3);
        let z = f.map(|_| 0.0);
        assert_eq!(igamma(&z, gamma).unwrap(), 0.0);
        assert_eq!(sstar_upper(&z, gamma).unwrap(), 0.0);
        assert!(matches!(igamma(&f, 0.0), Err(Error::InvalidGamma(_))));
    }

    #[test]
    fn time_series_validation() {
        assert!(TimeSeries::new(vec![0.1, 0.2], vec![1.0, 1.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(TimeSeries::new(vec![], vec![]).is_err());
        let s = TimeSeries::sample(0.01, 100, |t| t * t).unwrap();
        let d = s.derivative();
        for (t, v) in d.times().iter().zip(d.values()) {
            assert_abs_diff_eq!(*v, 2.0 * t, epsilon = 1e-10);
        }
    }
}
