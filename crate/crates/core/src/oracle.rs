//! Closed-form correlations for the plane-wave source.
//!
//! Every function reproduces the expectation of the Monte Carlo estimator on
//! the same lattice, including its normalization: the time-averaged
//! covariance of two detector pixels is `(1/Nt^2) sum_W |K(x1, x2, W)|^2`,
//! where `K` is the signal-idler amplitude correlation through both arms.

use std::f64::consts::PI;

use crate::correlator::cyclic_convolution;
use crate::lattice::{fft_axes, Axes, Direction, LatticeSpec, C64};
use crate::optics::ObjectMask;
use crate::source::GainTable;

/// `Gamma(xi, W) = (1/N) sum_q e^{i q xi} gamma(q, W) H(-q)` for every
/// frequency bin, transverse index fastest.
#[derive(Debug, Clone)]
pub struct NearField {
    spec: LatticeSpec,
    pub values: Vec<C64>,
}

impl NearField {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn at(&self, it: usize) -> &[C64] {
        let n = self.spec.transverse_len();
        &self.values[it * n..(it + 1) * n]
    }

    /// Half width at half maximum of `|Gamma(xi, 0)|` along x.
    pub fn x_coh(&self) -> f64 {
        let prof: Vec<f64> = self.at(0)[..self.spec.nx].iter().map(|v| v.norm()).collect();
        half_width_x(&prof, self.spec.dx, 0.5)
    }
}

pub fn near_field_correlation(gain: &GainTable) -> NearField {
    near_field_correlation_with(gain, None)
}

/// As [`near_field_correlation`], seen through a reference-arm transfer `H(q)`.
pub fn near_field_correlation_with(gain: &GainTable, transfer: Option<&[C64]>) -> NearField {
    let spec = *gain.spec();
    let n = spec.transverse_len();
    let ts = spec.transverse();
    let scale = 1.0 / (n as f64).sqrt();
    let mut values = Vec::with_capacity(spec.len());
    for it in 0..spec.nt {
        let mut a: Vec<C64> = gain
            .gamma_at(it)
            .iter()
            .enumerate()
            .map(|(j, g)| match transfer {
                Some(h) => g * h[ts.neg_transverse(j)] * scale,
                None => g * scale,
            })
            .collect();
        fft_axes(&ts, &mut a, Axes::TRANSVERSE, Direction::Inverse);
        values.extend(a);
    }
    NearField { spec, values }
}

/// Distance from the origin along x where a profile (indices `0..nx`, FFT
/// order) first falls to `frac` of its value at the origin, interpolated.
pub fn half_width_x(profile: &[f64], dx: f64, frac: f64) -> f64 {
    let m = profile[0] * frac;
    for j in 1..=profile.len() / 2 {
        if profile[j] < m {
            let (a, b) = (profile[j - 1], profile[j]);
            return dx * ((j - 1) as f64 + (a - m) / (a - b));
        }
    }
    dx * (profile.len() / 2) as f64
}

/// `Gamma_B(xi) = sum_W |Gamma(xi, W)|^2 dW/2pi` over the frequency bins `band`.
pub fn gamma_bucket_kernel(nf: &NearField, band: &[usize]) -> Vec<f64> {
    let n = nf.spec.transverse_len();
    let w = nf.spec.d_omega() / (2.0 * PI);
    let mut k = vec![0.0; n];
    for &it in band {
        for (kv, g) in k.iter_mut().zip(nf.at(it)) {
            *kv += g.norm_sqr() * w;
        }
    }
    k
}

/// Full width at half maximum of a kernel along x.
pub fn fwhm_x(kernel: &[f64], spec: &LatticeSpec) -> f64 {
    2.0 * half_width_x(&kernel[..spec.nx], spec.dx, 0.5)
}

/// Frequency-integrated gain `(1/Nt^2) sum_W |gamma(q, W)|^2` per transverse site.
pub fn integrated_gain(gain: &GainTable, band: &[usize]) -> Vec<f64> {
    let spec = gain.spec();
    let n = spec.transverse_len();
    let inv = 1.0 / (spec.nt as f64).powi(2);
    let mut w = vec![0.0; n];
    for &it in band {
        for (wv, g) in w.iter_mut().zip(gain.gamma_at(it)) {
            *wv += g.norm_sqr() * inv;
        }
    }
    w
}

/// Fixed-pixel f-f correlation: `G(x2) = (1/N) W(-q2) |T~(q1 + q2)|^2`.
pub fn oracle_ff(gain: &GainTable, obj: &ObjectMask, x1: usize, band: &[usize]) -> Vec<f64> {
    let spec = gain.spec();
    let n = spec.transverse_len();
    let w = integrated_gain(gain, band);
    let tt = obj.spectrum(spec);
    (0..n)
        .map(|j| w[spec.neg_transverse(j)] * tt[spec.add_transverse(x1, j)].norm_sqr() / n as f64)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SaOracle {
    /// `dA sum_x1 G(x1, x - x1)`.
    pub exact: Vec<f64>,
    /// `|T~(x)|^2`.
    pub approx: Vec<f64>,
}

/// Spatially averaged f-f correlation. The sum over `x1` of the gain factor
/// is a full-lattice sum, so on a periodic grid the exact result is the
/// object spectrum times a constant.
pub fn oracle_ff_sa(gain: &GainTable, obj: &ObjectMask, band: &[usize]) -> SaOracle {
    let spec = gain.spec();
    let n = spec.transverse_len() as f64;
    let w = integrated_gain(gain, band);
    let c = spec.cell_area() * w.iter().sum::<f64>() / n;
    let approx: Vec<f64> = obj.spectrum(spec).iter().map(|v| v.norm_sqr()).collect();
    SaOracle { exact: approx.iter().map(|v| v * c).collect(), approx }
}

/// Coherent telescope image seen from test pixel `x1` (f-f plane index):
/// `K(x2) = (1/N) sum_q T~(q1 - q) gamma(q) H(-q) e^{-i q x2}`.
pub fn oracle_telescope_pixel(
    gain: &GainTable,
    obj: &ObjectMask,
    x1: usize,
    transfer: &[C64],
    band: &[usize],
) -> Vec<f64> {
    let spec = gain.spec();
    let ts = spec.transverse();
    let n = ts.len();
    let tt = obj.spectrum(spec);
    let inv_nt2 = 1.0 / (spec.nt as f64).powi(2);
    let sn = 1.0 / (n as f64).sqrt();
    let mut g = vec![0.0; n];
    for &it in band {
        let gam = gain.gamma_at(it);
        let mut a: Vec<C64> = (0..n)
            .map(|q| {
                let mq = ts.neg_transverse(q);
                tt[ts.add_transverse(x1, mq)] * gam[q] * transfer[mq] * sn
            })
            .collect();
        fft_axes(&ts, &mut a, Axes::TRANSVERSE, Direction::Forward);
        for (gv, k) in g.iter_mut().zip(&a) {
            *gv += k.norm_sqr() * inv_nt2;
        }
    }
    g
}

/// Slowly varying object limit: `|T(x2)|^2 |gamma(q1, 0)|^2`.
pub fn telescope_pixel_approx(gain: &GainTable, obj: &ObjectMask, x1: usize) -> Vec<f64> {
    let gq = gain.gamma_at(0)[x1].norm_sqr();
    obj.t.iter().map(|t| t.norm_sqr() * gq).collect()
}

/// Incoherent telescope image: `dA sum_x |T(x)|^2 K_B(x - x2)`.
pub fn oracle_telescope_bucket(gain: &GainTable, obj: &ObjectMask, transfer: &[C64], band: &[usize]) -> Vec<f64> {
    let spec = gain.spec();
    let nf = near_field_correlation_with(gain, Some(transfer));
    let inv_nt2 = 1.0 / (spec.nt as f64).powi(2);
    let mut kb = vec![0.0; spec.transverse_len()];
    for &it in band {
        for (k, g) in kb.iter_mut().zip(nf.at(it)) {
            *k += g.norm_sqr() * inv_nt2;
        }
    }
    bucket_image_from_kernel(spec, obj, &kb)
}

/// `dA sum_x |T(x)|^2 k(x - x2)` for an arbitrary kernel on the lattice.
pub fn bucket_image_from_kernel(spec: &LatticeSpec, obj: &ObjectMask, kernel: &[f64]) -> Vec<f64> {
    let ts = spec.transverse();
    let flipped: Vec<f64> = (0..ts.len()).map(|j| kernel[ts.neg_transverse(j)]).collect();
    let da = spec.cell_area();
    cyclic_convolution(&ts, &obj.intensity(), &flipped).into_iter().map(|v| v * da).collect()
}

/// `Re` of the inverse transform of a far-field map (FFT-ordered).
pub fn ift_reconstruct(map: &[f64], spec: &LatticeSpec) -> Vec<f64> {
    let ts = spec.transverse();
    let mut a: Vec<C64> = map.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft_axes(&ts, &mut a, Axes::TRANSVERSE, Direction::Inverse);
    a.into_iter().map(|v| v.re).collect()
}

/// Imaging bandwidth: HWHM along q_x of the band-integrated `|gamma|^2`,
/// measured at the outermost half-maximum crossing.
pub fn bandwidth_pdc(gain: &GainTable, band: &[usize]) -> f64 {
    let spec = gain.spec();
    let w = integrated_gain(gain, band);
    let prof = &w[..spec.nx / 2 + 1];
    let m = prof.iter().cloned().fold(0.0, f64::max) * 0.5;
    let dq = spec.dq_x();
    match prof.iter().rposition(|&v| v >= m) {
        Some(j) if j + 1 < prof.len() => {
            let (a, b) = (prof[j], prof[j + 1]);
            dq * (j as f64 + (a - m) / (a - b))
        }
        _ => dq * (spec.nx / 2) as f64,
    }
}
