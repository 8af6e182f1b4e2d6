//! Convergence error, power-law fits and image measures.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::oracle::bandwidth_pdc;
use crate::source::{GainTable, SourceParams};

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Relative RMS error of `g_n` against `g_ref` after matching their maxima.
pub fn epsilon(g_n: &[f64], g_ref: &[f64]) -> Result<f64> {
    if g_n.len() != g_ref.len() {
        return Err(Error::Contract("epsilon: maps have different sizes".into()));
    }
    let mn = max_of(g_n);
    if mn == 0.0 || !mn.is_finite() {
        return Err(Error::Metric("maximum of the estimate is zero".into()));
    }
    let norm: f64 = g_ref.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Metric("reference map is zero".into()));
    }
    let s = max_of(g_ref) / mn;
    let d: f64 = g_n.iter().zip(g_ref).map(|(a, b)| (a * s - b).powi(2)).sum();
    Ok(d.sqrt() / norm)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSeries {
    pub entries: Vec<(u64, f64)>,
    pub reference: String,
}

impl ErrorSeries {
    pub fn new(reference: impl Into<String>) -> Self {
        ErrorSeries { entries: Vec::new(), reference: reference.into() }
    }

    pub fn push(&mut self, n: u64, eps: f64) -> Result<()> {
        if let Some(&(last, _)) = self.entries.last() {
            if n <= last {
                return Err(Error::Contract(format!("error series n must increase ({last} then {n})")));
            }
        }
        if !(eps >= 0.0) {
            return Err(Error::Contract(format!("negative or NaN epsilon {eps}")));
        }
        self.entries.push((n, eps));
        Ok(())
    }

    pub fn last(&self) -> Option<f64> {
        self.entries.last().map(|e| e.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,epsilon\n");
        for (n, e) in &self.entries {
            let _ = writeln!(s, "{n},{e:.10e}");
        }
        s
    }

    /// Root mean square of several series sampled at the same `n`.
    pub fn rms_of(series: &[ErrorSeries]) -> Result<ErrorSeries> {
        let first = series.first().ok_or_else(|| Error::Contract("no series to average".into()))?;
        let mut out = ErrorSeries::new(first.reference.clone());
        for (k, &(n, _)) in first.entries.iter().enumerate() {
            let mut acc = 0.0;
            for s in series {
                let &(m, e) = s.entries.get(k).ok_or_else(|| Error::Contract("series lengths differ".into()))?;
                if m != n {
                    return Err(Error::Contract("series sampled at different n".into()));
                }
                acc += e * e;
            }
            out.push(n, (acc / series.len() as f64).sqrt())?;
        }
        Ok(out)
    }
}

/// Geometric schedule (factor sqrt 2) from `start` up to and including `end`.
pub fn sqrt2_schedule(start: u64, end: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut x = start.max(2) as f64;
    while (x.round() as u64) < end {
        let n = x.round() as u64;
        if out.last() != Some(&n) {
            out.push(n);
        }
        x *= std::f64::consts::SQRT_2;
    }
    if end >= 2 {
        out.push(end);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceFit {
    pub d0: f64,
    pub d1: f64,
    /// RMS of the fit residuals.
    pub residual: f64,
}

impl ConvergenceFit {
    pub fn eval(&self, n: f64) -> f64 {
        (self.d0 * n).powf(-0.5) + self.d1
    }
}

/// Least squares fit of `eps(n) = (d0 n)^{-1/2} + d1`.
///
/// For fixed `d1` the model is linear in `a = d0^{-1/2}`, so `a` is solved in
/// closed form and the remaining one-dimensional problem in `d1` (a convex
/// quadratic) is minimized by golden-section search over `[0, min eps]`.
pub fn fit_convergence(series: &ErrorSeries) -> Result<ConvergenceFit> {
    let e = &series.entries;
    if e.len() < 8 {
        return Err(Error::FitFailed(format!("need at least 8 points, have {}", e.len())));
    }
    let (n_min, n_max) = (e[0].0 as f64, e[e.len() - 1].0 as f64);
    if n_max < 10.0 * n_min {
        return Err(Error::FitFailed("points must span at least one decade".into()));
    }
    if e.windows(2).all(|w| w[1].1 >= w[0].1) {
        return Err(Error::FitFailed("error series is non-decreasing".into()));
    }
    let xs: Vec<f64> = e.iter().map(|&(n, _)| (n as f64).powf(-0.5)).collect();
    let ys: Vec<f64> = e.iter().map(|&(_, v)| v).collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let solve = |d1: f64| {
        let a = xs.iter().zip(&ys).map(|(x, y)| x * (y - d1)).sum::<f64>() / sxx;
        let r: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - d1 - a * x).powi(2)).sum();
        (a, r)
    };
    let (mut lo, mut hi) = (0.0, ys.iter().cloned().fold(f64::INFINITY, f64::min));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (solve(c).1, solve(d).1);
    for _ in 0..200 {
        if (hi - lo) <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = solve(c).1;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = solve(d).1;
        }
    }
    // the bracket ends are candidates too
    let mut best = 0.5 * (lo + hi);
    let mut best_r = solve(best).1;
    for cand in [0.0, ys.iter().cloned().fold(f64::INFINITY, f64::min)] {
        let r = solve(cand).1;
        if r < best_r {
            best = cand;
            best_r = r;
        }
    }
    let (a, r) = solve(best);
    if !(a > 0.0) {
        return Err(Error::FitFailed("fitted amplitude is not positive".into()));
    }
    Ok(ConvergenceFit { d0: 1.0 / (a * a), d1: best, residual: (r / ys.len() as f64).sqrt() })
}

/// Expected spatial-averaging speedup `delta_q_PDC / (2/w0)` per dimension.
pub fn speedup_estimate(params: &SourceParams, gain: &GainTable, band: &[usize]) -> f64 {
    bandwidth_pdc(gain, band) / params.delta_q_p()
}

/// 10%-90% rise distance (in samples) of a rising edge between indices
/// `lo..=hi` of a 1D profile, interpolated.
pub fn edge_width_10_90(profile: &[f64], lo: usize, hi: usize) -> f64 {
    let seg = &profile[lo..=hi];
    let (a, b) = (seg[0], seg[seg.len() - 1]);
    let cross = |f: f64| {
        let level = a + f * (b - a);
        let rising = b > a;
        for j in 1..seg.len() {
            let (p, q) = (seg[j - 1], seg[j]);
            let hit = if rising { p < level && q >= level } else { p > level && q <= level };
            if hit {
                return (j - 1) as f64 + (level - p) / (q - p);
            }
        }
        f64::NAN
    };
    (cross(0.9) - cross(0.1)).abs()
}

/// `std/mean` of the values selected by `mask`.
pub fn relative_std(values: &[f64], mask: &[bool]) -> f64 {
    let sel: Vec<f64> = values.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
    let n = sel.len() as f64;
    let mean = sel.iter().sum::<f64>() / n;
    let var = sel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}
