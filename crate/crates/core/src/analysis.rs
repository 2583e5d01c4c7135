//! Small post-processing helpers: rate fits and frequency estimates.

use rustfft::{num_complex::Complex, FftPlanner};

/// Least-squares slope of `ln y` against `ln x`; `None` when fewer than two
/// points are usable (non-positive or non-finite entries are rejected).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Observed convergence orders `log2(e_k / e_{k+1})` for errors on meshes
/// refined by a factor 2 each time.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Angular frequency from the sign changes of a sampled signal, with
/// crossing times located by linear interpolation.
pub fn zero_crossing_frequency(times: &[f64], values: &[f64]) -> Option<f64> {
    let mut crossings = Vec::new();
    for k in 0..values.len().saturating_sub(1) {
        let (a, b) = (values[k], values[k + 1]);
        if a == 0.0 && k == 0 {
            crossings.push(times[0]);
        } else if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let theta = a / (a - b);
            crossings.push(times[k] + theta * (times[k + 1] - times[k]));
        }
    }
    crossings.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    if crossings.len() < 2 {
        return None;
    }
    let span = crossings.last().unwrap() - crossings[0];
    Some(std::f64::consts::PI * (crossings.len() - 1) as f64 / span)
}

/// Angular frequency of the dominant spectral peak of a uniformly sampled
/// signal (mean removed, Hann window, zero padding, parabolic refinement).
pub fn fft_peak_frequency(dt: f64, values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 8 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let len = (n * 16).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); len];
    for (k, v) in values.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
        buf[k] = Complex::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2].iter().map(|c| c.norm()).collect();
    let (kmax, _) = mag
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, 0.0), |best, (k, &m)| if m > best.1 { (k, m) } else { best });
    if kmax == 0 || kmax + 1 >= mag.len() {
        return None;
    }
    let (a, b, c) = (mag[kmax - 1].ln(), mag[kmax].ln(), mag[kmax + 1].ln());
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    let freq = (kmax as f64 + shift) / (len as f64 * dt);
    Some(2.0 * std::f64::consts::PI * freq)
}
