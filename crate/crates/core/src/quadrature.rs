//! One-dimensional rules and small fitting helpers.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(points: usize) -> Vec<(f64, f64)> {
    let deg = NonZeroUsize::new(points.max(1)).expect("nonzero");
    GaussLegendre::new(deg).as_node_weight_pairs().to_vec()
}

/// Composite Gauss–Legendre rule on consecutive panels [b_i, b_{i+1}].
pub fn composite_gauss_legendre(breaks: &[f64], points: usize) -> Vec<(f64, f64)> {
    let base = gauss_legendre(points);
    let mut out = Vec::with_capacity(points * breaks.len().saturating_sub(1));
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        out.extend(base.iter().map(|&(x, wt)| (mid + half * x, half * wt)));
    }
    out
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit("need at least two paired samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// Slope of log y against log x.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit("log-log fit needs positive finite samples".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_slope(&lx, &ly)
}

/// `count` points geometrically spaced from `a` to `b` inclusive.
pub fn log_space(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..count)
        .map(|i| (la + (lb - la) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Trapezoid rule on arbitrary nodes.
pub fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2)
        .zip(f.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum()
}

/// Running trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..t.len() {
        acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
        out.push(acc);
    }
    out
}

/// Piecewise-linear interpolation of samples (t, f) at s, clamped to the ends.
pub fn interp_linear(t: &[f64], f: &[f64], s: f64) -> f64 {
    if s <= t[0] {
        return f[0];
    }
    let last = t.len() - 1;
    if s >= t[last] {
        return f[last];
    }
    let i = t.partition_point(|&v| v <= s) - 1;
    let w = (s - t[i]) / (t[i + 1] - t[i]);
    f[i] * (1.0 - w) + f[i + 1] * w
}
