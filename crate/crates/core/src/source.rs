//! Parametric down-conversion source: plane-wave gain functions and a
//! Gaussian-pump split-step crystal propagator.
//!
//! Both models integrate the same linear coupled equations
//!
//! ```text
//! dz a1 = (i/2k) lap a1 - (i k''/2) dt^2 a1 + sigma_p alpha(x,t) a2^*
//! ```
//!
//! (and 1 <-> 2). For a uniform pump the exact solution over the crystal is
//! `b1(q) = U a1(q) + V a2^*(-q)` with, writing `delta = l_c (k'' W^2 - q^2/k)`,
//! `g = sigma_p l_c` and `G = sqrt(g^2 - delta^2/4)`:
//!
//! ```text
//! U = cosh G + i (delta/2) sinh(G)/G,    V = g sinh(G)/G
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{fft_axes, vacuum_amplitude, Axes, ComplexField, Direction, Domain, LatticeSpec, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpModel {
    PlaneWave,
    GaussianPump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Crystal length (m).
    pub l_c: f64,
    /// Wavenumber inside the crystal (1/m).
    pub k: f64,
    /// Group velocity dispersion k'' (s^2/m).
    pub gvd: f64,
    /// Gain per unit length (1/m); `sigma_p * l_c` is the crystal gain.
    pub sigma_p: f64,
    /// Pump waist (m).
    pub w0: f64,
    /// Pump duration (s).
    pub tau0: f64,
    pub model: PumpModel,
    pub nz: usize,
    pub n1: f64,
    pub n2: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        let l_c = 4e-3;
        let x_coh = 16e-6;
        let tau_coh = 0.96e-12;
        SourceParams {
            l_c,
            k: l_c / (x_coh * x_coh),
            gvd: tau_coh * tau_coh / l_c,
            sigma_p: 3.0 / l_c,
            w0: 600e-6,
            tau0: 1.5e-12,
            model: PumpModel::PlaneWave,
            nz: 200,
            n1: 1.66,
            n2: 1.66,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [("l_c", self.l_c), ("k", self.k), ("w0", self.w0), ("tau0", self.tau0), ("n1", self.n1), ("n2", self.n2)];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("source {name} = {v} must be positive")));
            }
        }
        if !(self.gvd.is_finite() && self.gvd != 0.0) {
            return Err(Error::Config("source gvd must be finite and nonzero".into()));
        }
        if !(self.sigma_p.is_finite() && self.sigma_p >= 0.0) {
            return Err(Error::Config("source sigma_p must be >= 0".into()));
        }
        if self.nz == 0 {
            return Err(Error::Config("nz must be >= 1".into()));
        }
        Ok(())
    }

    /// Natural spatial bandwidth `sqrt(k/l_c)`.
    pub fn q0(&self) -> f64 {
        (self.k / self.l_c).sqrt()
    }

    pub fn x_coh(&self) -> f64 {
        1.0 / self.q0()
    }

    pub fn omega0(&self) -> f64 {
        1.0 / (self.gvd.abs() * self.l_c).sqrt()
    }

    pub fn tau_coh(&self) -> f64 {
        1.0 / self.omega0()
    }

    /// Pump angular bandwidth `2/w0`.
    pub fn delta_q_p(&self) -> f64 {
        2.0 / self.w0
    }

    /// Dimensionless crystal gain `sigma_p l_c`.
    pub fn gain(&self) -> f64 {
        self.sigma_p * self.l_c
    }

    /// Dimensionless phase mismatch at transverse `|q|^2` and frequency `omega`.
    pub fn mismatch(&self, q2: f64, omega: f64) -> f64 {
        self.l_c * (self.gvd * omega * omega - q2 / self.k)
    }

    /// Default telescope imaging-plane shift (negative: inside the crystal).
    pub fn default_delta_z(&self) -> f64 {
        if self.sigma_p == 0.0 {
            return -(1.0 / self.n1 + 1.0 / self.n2) * self.l_c;
        }
        -(1.0 / self.n1 + 1.0 / self.n2) * (self.sigma_p * self.l_c).tanh() / self.sigma_p
    }

    /// Free-space wavenumber of the degenerate field, used by the lens mappings.
    pub fn default_k_free(&self) -> f64 {
        self.k / self.n1
    }
}

/// `(U, V)` for mismatch `delta` and gain `g`.
pub fn gain_functions(delta: f64, g: f64) -> (C64, C64) {
    let h = 0.5 * delta;
    let s2 = g * g - h * h;
    // c = cosh(sqrt(s2)), s = sinh(sqrt(s2))/sqrt(s2), continued through s2 <= 0
    let (c, s) = if s2.abs() < 1e-8 {
        (1.0 + 0.5 * s2, 1.0 + s2 / 6.0)
    } else if s2 > 0.0 {
        let r = s2.sqrt();
        (r.cosh(), r.sinh() / r)
    } else {
        let r = (-s2).sqrt();
        (r.cos(), r.sin() / r)
    };
    (C64::new(c, h * s), C64::new(g * s, 0.0))
}

/// Sampled gain functions on the spectral lattice.
#[derive(Debug, Clone)]
pub struct GainTable {
    spec: LatticeSpec,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub gamma: Vec<C64>,
}

impl GainTable {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    /// Transverse slice of `gamma` at time-frequency index `it`.
    pub fn gamma_at(&self, it: usize) -> &[C64] {
        let n = self.spec.transverse_len();
        &self.gamma[it * n..(it + 1) * n]
    }

    /// Indices `it` with `|omega| <= halfwidth` (all bins for `None`).
    pub fn band(&self, halfwidth: Option<f64>) -> Vec<usize> {
        band_indices(&self.spec, halfwidth)
    }
}

pub fn band_indices(spec: &LatticeSpec, halfwidth: Option<f64>) -> Vec<usize> {
    let tol = 1e-9 * spec.d_omega();
    (0..spec.nt)
        .filter(|&it| match halfwidth {
            None => true,
            Some(w) => spec.omega(it).abs() <= w + tol,
        })
        .collect()
}

pub fn compute_gain(params: &SourceParams, spec: &LatticeSpec) -> Result<GainTable> {
    params.validate()?;
    let g = params.gain();
    let n = spec.len();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let (ix, iy, it) = spec.coords(i);
        let q2 = spec.qx(ix).powi(2) + if spec.is_2d() { spec.qy(iy).powi(2) } else { 0.0 };
        let (uu, vv) = gain_functions(params.mismatch(q2, spec.omega(it)), g);
        u.push(uu);
        v.push(vv);
    }
    let gamma = (0..n).map(|i| u[i] * v[spec.neg(i)]).collect();
    Ok(GainTable { spec: *spec, u, v, gamma })
}

/// Signal and idler at the crystal exit face, in position space.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub b1: ComplexField,
    pub b2: ComplexField,
}

pub fn generate_shot_plane_wave<R: Rng + ?Sized>(gain: &GainTable, rng: &mut R) -> FieldPair {
    let spec = gain.spec;
    let n = spec.len();
    let a1: Vec<C64> = (0..n).map(|_| vacuum_amplitude(rng)).collect();
    let a2: Vec<C64> = (0..n).map(|_| vacuum_amplitude(rng)).collect();
    let mut b1 = Vec::with_capacity(n);
    let mut b2 = Vec::with_capacity(n);
    for i in 0..n {
        let m = spec.neg(i);
        b1.push(gain.u[i] * a1[i] + gain.v[i] * a2[m].conj());
        b2.push(gain.u[i] * a2[i] + gain.v[i] * a1[m].conj());
    }
    fft_axes(&spec, &mut b1, Axes::ALL, Direction::Inverse);
    fft_axes(&spec, &mut b2, Axes::ALL, Direction::Inverse);
    FieldPair {
        b1: ComplexField::new(spec, Domain::Position, b1).expect("lattice length"),
        b2: ComplexField::new(spec, Domain::Position, b2).expect("lattice length"),
    }
}

/// Symmetric split-step integrator for a Gaussian pump.
///
/// The pump does not diffract inside the crystal, so the local squeeze
/// factors are tabulated once.
#[derive(Debug, Clone)]
pub struct SplitStepPropagator {
    spec: LatticeSpec,
    nz: usize,
    half_phase: Vec<C64>,
    full_phase: Vec<C64>,
    cosh: Vec<f64>,
    sinh: Vec<f64>,
}

impl SplitStepPropagator {
    pub fn new(params: &SourceParams, spec: &LatticeSpec) -> Result<Self> {
        params.validate()?;
        let dz = params.l_c / params.nz as f64;
        if params.sigma_p * dz >= 0.5 {
            return Err(Error::Config(format!(
                "split step too coarse: sigma_p*dz = {:.3} (need < 0.5)",
                params.sigma_p * dz
            )));
        }
        let n = spec.len();
        let mut half_phase = Vec::with_capacity(n);
        let mut full_phase = Vec::with_capacity(n);
        let mut cosh = Vec::with_capacity(n);
        let mut sinh = Vec::with_capacity(n);
        for i in 0..n {
            let (ix, iy, it) = spec.coords(i);
            let q2 = spec.qx(ix).powi(2) + if spec.is_2d() { spec.qy(iy).powi(2) } else { 0.0 };
            let rate = 0.5 * params.mismatch(q2, spec.omega(it)) / params.l_c;
            half_phase.push(C64::from_polar(1.0, 0.5 * rate * dz));
            full_phase.push(C64::from_polar(1.0, rate * dz));
            let r2 = spec.x(ix).powi(2) + if spec.is_2d() { spec.y(iy).powi(2) } else { 0.0 };
            let t = spec.t(it);
            let alpha = (-r2 / params.w0.powi(2)).exp() * (-(t * t) / params.tau0.powi(2)).exp();
            let s = params.sigma_p * alpha * dz;
            cosh.push(s.cosh());
            sinh.push(s.sinh());
        }
        Ok(SplitStepPropagator { spec: *spec, nz: params.nz, half_phase, full_phase, cosh, sinh })
    }

    fn linear(&self, f: &mut [C64], phase: &[C64]) {
        fft_axes(&self.spec, f, Axes::ALL, Direction::Forward);
        for (v, p) in f.iter_mut().zip(phase) {
            *v *= p;
        }
        fft_axes(&self.spec, f, Axes::ALL, Direction::Inverse);
    }

    fn squeeze(&self, a1: &mut [C64], a2: &mut [C64]) {
        for i in 0..a1.len() {
            let (c, s) = (self.cosh[i], self.sinh[i]);
            let x = a1[i];
            let y = a2[i];
            a1[i] = x * c + y.conj() * s;
            a2[i] = y * c + x.conj() * s;
        }
    }

    /// Propagates vacuum inputs through the crystal.
    pub fn propagate(&self, mut a1: Vec<C64>, mut a2: Vec<C64>) -> FieldPair {
        // L/2 (N L)^(nz-1) N L/2 with adjacent half steps merged
        for f in [&mut a1, &mut a2] {
            self.linear(f, &self.half_phase);
        }
        for step in 0..self.nz {
            self.squeeze(&mut a1, &mut a2);
            let phase = if step + 1 == self.nz { &self.half_phase } else { &self.full_phase };
            self.linear(&mut a1, phase);
            self.linear(&mut a2, phase);
        }
        FieldPair {
            b1: ComplexField::new(self.spec, Domain::Position, a1).expect("lattice length"),
            b2: ComplexField::new(self.spec, Domain::Position, a2).expect("lattice length"),
        }
    }

    pub fn generate_shot<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldPair {
        let n = self.spec.len();
        let a1 = (0..n).map(|_| vacuum_amplitude(rng)).collect();
        let a2 = (0..n).map(|_| vacuum_amplitude(rng)).collect();
        self.propagate(a1, a2)
    }
}

pub fn generate_shot_gaussian_pump<R: Rng + ?Sized>(
    params: &SourceParams,
    spec: &LatticeSpec,
    rng: &mut R,
) -> Result<FieldPair> {
    Ok(SplitStepPropagator::new(params, spec)?.generate_shot(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::shot_rng;

    #[test]
    fn zero_mismatch_case() {
        let (u, v) = gain_functions(0.0, 3.0);
        assert!((u - C64::new(3f64.cosh(), 0.0)).norm() < 1e-12);
        assert!((v - C64::new(3f64.sinh(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn no_gain_is_pure_phase() {
        for d in [-7.0, -0.3, 0.0, 0.4, 12.0] {
            let (u, v) = gain_functions(d, 0.0);
            assert!((u.norm() - 1.0).abs() < 1e-12);
            assert_eq!(v.norm(), 0.0);
        }
    }

    #[test]
    fn series_limit_matches_neighbours() {
        let g = 3.0;
        let (_, v0) = gain_functions(2.0 * g, g);
        assert!((v0.re - g).abs() < 1e-12);
        let (_, vp) = gain_functions(2.0 * g * (1.0 + 1e-6), g);
        let (_, vm) = gain_functions(2.0 * g * (1.0 - 1e-6), g);
        assert!((vp.re - g).abs() < 1e-4 && (vm.re - g).abs() < 1e-4);
        assert!((0.5 * (vp.re + vm.re) - v0.re).abs() < 1e-8);
    }

    #[test]
    fn derived_scales() {
        let p = SourceParams::default();
        assert!((p.x_coh() - 16e-6).abs() < 1e-12);
        assert!((p.tau_coh() - 0.96e-12).abs() < 1e-20);
        assert!((p.gain() - 3.0).abs() < 1e-12);
        assert!((p.delta_q_p() - 2.0 / 600e-6).abs() < 1e-9);
    }

    #[test]
    fn gamma_is_even() {
        let p = SourceParams::default();
        let s = LatticeSpec::new(16, 8, 4, 4e-6, 4e-6, 0.5e-12).unwrap();
        let gt = compute_gain(&p, &s).unwrap();
        for i in 0..s.len() {
            assert!((gt.gamma[i] - gt.gamma[s.neg(i)]).norm() < 1e-9 * gt.gamma[i].norm().max(1.0));
        }
    }

    #[test]
    fn split_step_without_gain_conserves_norm() {
        let p = SourceParams { sigma_p: 0.0, nz: 10, w0: 50e-6, ..Default::default() };
        let s = LatticeSpec::new(64, 1, 8, 2e-6, 2e-6, 0.3e-12).unwrap();
        let prop = SplitStepPropagator::new(&p, &s).unwrap();
        let mut rng = shot_rng(3, 0);
        let a1: Vec<C64> = (0..s.len()).map(|_| vacuum_amplitude(&mut rng)).collect();
        let a2: Vec<C64> = (0..s.len()).map(|_| vacuum_amplitude(&mut rng)).collect();
        let n1: f64 = a1.iter().map(|v| v.norm_sqr()).sum();
        let n2: f64 = a2.iter().map(|v| v.norm_sqr()).sum();
        let out = prop.propagate(a1, a2);
        assert!((out.b1.norm_sqr() - n1).abs() < 1e-10 * n1);
        assert!((out.b2.norm_sqr() - n2).abs() < 1e-10 * n2);
    }

    #[test]
    fn step_guard() {
        let p = SourceParams { nz: 4, ..Default::default() };
        let s = LatticeSpec::line(16, 1e-6).unwrap();
        assert!(SplitStepPropagator::new(&p, &s).is_err());
    }

    #[test]
    fn uniform_pump_matches_plane_wave_transfer() {
        // w0, tau0 huge: the split-step map must equal U a1 + V a2^*(-q)
        let p = SourceParams { w0: 1.0, tau0: 1.0, nz: 400, ..Default::default() };
        let s = LatticeSpec::new(32, 1, 4, 3e-6, 3e-6, 0.6e-12).unwrap();
        let gt = compute_gain(&p, &s).unwrap();
        let prop = SplitStepPropagator::new(&p, &s).unwrap();
        // impulse in a1 at spectral site j
        let j = s.idx(3, 0, 1);
        let mut a1 = vec![C64::new(0.0, 0.0); s.len()];
        a1[j] = C64::new(1.0, 0.0);
        fft_axes(&s, &mut a1, Axes::ALL, Direction::Inverse);
        let out = prop.propagate(a1, vec![C64::new(0.0, 0.0); s.len()]);
        let b1 = out.b1.forward_transform().unwrap();
        let b2 = out.b2.forward_transform().unwrap();
        assert!((b1.data()[j] - gt.u[j]).norm() < 1e-3 * gt.u[j].norm());
        let m = s.neg(j);
        assert!((b2.data()[m] - gt.v[m]).norm() < 1e-3 * gt.v[m].norm());
    }
}
