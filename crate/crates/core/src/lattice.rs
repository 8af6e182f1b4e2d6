//! Periodic (x, y, t) grids, unitary FFTs and Wigner vacuum sampling.
//!
//! Site index is `(it * ny + iy) * nx + ix`. Index 0 is the origin on every
//! axis; index `i` maps to the signed offset `i` for `i < n/2` and `i - n`
//! otherwise, so spectral arrays are stored in plain FFT order.
//!
//! Transforms are unitary on every axis: `F(q) = n^{-1/2} sum_x f(x) e^{-iqx}`
//! and the inverse uses the conjugate kernel. Time uses the same sign.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    /// Transverse steps in metres, time step in seconds.
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
}

fn check_pow2(name: &str, n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Lattice(format!("{name} = {n} is not a power of two")));
    }
    Ok(())
}

/// Signed offset of index `i` on an axis of length `n`.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 || n == 1 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Index of `-i` on a periodic axis of length `n`.
#[inline]
pub fn neg_index(i: usize, n: usize) -> usize {
    (n - i) % n
}

impl LatticeSpec {
    pub fn new(nx: usize, ny: usize, nt: usize, dx: f64, dy: f64, dt: f64) -> Result<Self> {
        check_pow2("nx", nx)?;
        check_pow2("ny", ny)?;
        check_pow2("nt", nt)?;
        for (name, v) in [("dx", dx), ("dy", dy), ("dt", dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Lattice(format!("{name} = {v} must be positive")));
            }
        }
        Ok(LatticeSpec { nx, ny, nt, dx, dy, dt })
    }

    /// 1D transverse grid without time.
    pub fn line(nx: usize, dx: f64) -> Result<Self> {
        Self::new(nx, 1, 1, dx, dx, 1.0)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transverse_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_2d(&self) -> bool {
        self.ny > 1
    }

    /// Same transverse grid, single time bin.
    pub fn transverse(&self) -> LatticeSpec {
        LatticeSpec { nt: 1, ..*self }
    }

    /// Pixel area; the y extent is dropped on 1D grids.
    pub fn cell_area(&self) -> f64 {
        if self.is_2d() {
            self.dx * self.dy
        } else {
            self.dx
        }
    }

    pub fn dq_x(&self) -> f64 {
        2.0 * PI / (self.nx as f64 * self.dx)
    }

    pub fn dq_y(&self) -> f64 {
        2.0 * PI / (self.ny as f64 * self.dy)
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / (self.nt as f64 * self.dt)
    }

    pub fn omega_nyquist(&self) -> f64 {
        PI / self.dt
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, it: usize) -> usize {
        (it * self.ny + iy) * self.nx + ix
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let ix = i % self.nx;
        let r = i / self.nx;
        (ix, r % self.ny, r / self.ny)
    }

    pub fn x(&self, ix: usize) -> f64 {
        signed_index(ix, self.nx) as f64 * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        signed_index(iy, self.ny) as f64 * self.dy
    }

    pub fn t(&self, it: usize) -> f64 {
        signed_index(it, self.nt) as f64 * self.dt
    }

    pub fn qx(&self, ix: usize) -> f64 {
        signed_index(ix, self.nx) as f64 * self.dq_x()
    }

    pub fn qy(&self, iy: usize) -> f64 {
        signed_index(iy, self.ny) as f64 * self.dq_y()
    }

    pub fn omega(&self, it: usize) -> f64 {
        signed_index(it, self.nt) as f64 * self.d_omega()
    }

    /// Index of the point reflected through the origin on all axes.
    #[inline]
    pub fn neg(&self, i: usize) -> usize {
        let (ix, iy, it) = self.coords(i);
        self.idx(neg_index(ix, self.nx), neg_index(iy, self.ny), neg_index(it, self.nt))
    }

    /// Transverse index reflected through the origin.
    #[inline]
    pub fn neg_transverse(&self, j: usize) -> usize {
        let ix = j % self.nx;
        let iy = j / self.nx;
        neg_index(iy, self.ny) * self.nx + neg_index(ix, self.nx)
    }

    /// Transverse index of the sum of two transverse offsets.
    #[inline]
    pub fn add_transverse(&self, a: usize, b: usize) -> usize {
        let ix = (a % self.nx + b % self.nx) % self.nx;
        let iy = (a / self.nx + b / self.nx) % self.ny;
        iy * self.nx + ix
    }

    pub fn check_same(&self, other: &LatticeSpec) -> Result<()> {
        if self != other {
            return Err(Error::Contract(format!("lattice mismatch: {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Position,
    Spectral,
}

/// Axis selection for partial transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Axes {
    pub x: bool,
    pub y: bool,
    pub t: bool,
}

impl Axes {
    pub const ALL: Axes = Axes { x: true, y: true, t: true };
    pub const TRANSVERSE: Axes = Axes { x: true, y: true, t: false };
    pub const TIME: Axes = Axes { x: false, y: false, t: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match dir {
            Direction::Forward => p.plan_fft_forward(n),
            Direction::Inverse => p.plan_fft_inverse(n),
        }
    })
}

/// In-place unitary transform of `data` laid out on `spec` along the chosen axes.
pub fn fft_axes(spec: &LatticeSpec, data: &mut [C64], axes: Axes, dir: Direction) {
    assert_eq!(data.len(), spec.len(), "data does not match lattice");
    let (nx, ny, nt) = (spec.nx, spec.ny, spec.nt);
    if axes.x && nx > 1 {
        plan(nx, dir).process(data);
        scale(data, nx);
    }
    if axes.y && ny > 1 {
        strided_fft(data, ny, nx, dir, |line| {
            let it = line / nx;
            let ix = line % nx;
            it * nx * ny + ix
        }, nx * nt);
    }
    if axes.t && nt > 1 {
        strided_fft(data, nt, nx * ny, dir, |line| line, nx * ny);
    }
}

fn scale(data: &mut [C64], n: usize) {
    let s = 1.0 / (n as f64).sqrt();
    for v in data.iter_mut() {
        *v *= s;
    }
}

/// Transforms `lines` sequences of length `n` with element stride `stride`;
/// `start(line)` gives each sequence's first index.
fn strided_fft(
    data: &mut [C64],
    n: usize,
    stride: usize,
    dir: Direction,
    start: impl Fn(usize) -> usize,
    lines: usize,
) {
    let mut buf = vec![C64::new(0.0, 0.0); n * lines];
    for l in 0..lines {
        let s = start(l);
        for k in 0..n {
            buf[l * n + k] = data[s + k * stride];
        }
    }
    plan(n, dir).process(&mut buf);
    let sc = 1.0 / (n as f64).sqrt();
    for l in 0..lines {
        let s = start(l);
        for k in 0..n {
            data[s + k * stride] = buf[l * n + k] * sc;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    spec: LatticeSpec,
    domain: Domain,
    data: Vec<C64>,
}

impl ComplexField {
    pub fn new(spec: LatticeSpec, domain: Domain, data: Vec<C64>) -> Result<Self> {
        if data.len() != spec.len() {
            return Err(Error::Contract(format!(
                "field has {} values, lattice has {} sites",
                data.len(),
                spec.len()
            )));
        }
        Ok(ComplexField { spec, domain, data })
    }

    pub fn zeros(spec: LatticeSpec, domain: Domain) -> Self {
        ComplexField { spec, domain, data: vec![C64::new(0.0, 0.0); spec.len()] }
    }

    pub fn from_fn(spec: LatticeSpec, domain: Domain, f: impl Fn(usize) -> C64) -> Self {
        ComplexField { spec, domain, data: (0..spec.len()).map(f).collect() }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    fn expect(&self, d: Domain) -> Result<()> {
        if self.domain != d {
            return Err(Error::Contract(format!("expected {d:?} field, got {:?}", self.domain)));
        }
        Ok(())
    }

    pub fn forward_transform(mut self) -> Result<Self> {
        self.expect(Domain::Position)?;
        fft_axes(&self.spec, &mut self.data, Axes::ALL, Direction::Forward);
        self.domain = Domain::Spectral;
        Ok(self)
    }

    pub fn inverse_transform(mut self) -> Result<Self> {
        self.expect(Domain::Spectral)?;
        fft_axes(&self.spec, &mut self.data, Axes::ALL, Direction::Inverse);
        self.domain = Domain::Position;
        Ok(self)
    }
}

/// Independent, reproducible generator for one shot.
pub fn shot_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circular complex Gaussian with `<|a|^2> = 1/2`.
#[inline]
pub fn vacuum_amplitude<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(0.5 * re, 0.5 * im)
}

pub fn sample_vacuum<R: Rng + ?Sized>(spec: &LatticeSpec, rng: &mut R) -> ComplexField {
    sample_vacuum_in(spec, Domain::Position, rng)
}

/// Vacuum noise drawn directly in the requested domain. The unitary transform
/// maps white circular noise onto itself, so both choices are equivalent.
pub fn sample_vacuum_in<R: Rng + ?Sized>(
    spec: &LatticeSpec,
    domain: Domain,
    rng: &mut R,
) -> ComplexField {
    let data = (0..spec.len()).map(|_| vacuum_amplitude(rng)).collect();
    ComplexField { spec: *spec, domain, data }
}

/// Centered copy of a transverse map (origin moved to `(nx/2, ny/2)`).
pub fn fftshift_2d(map: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let ox = (ix + nx / 2) % nx;
            let oy = (iy + ny / 2) % ny;
            out[oy * nx + ox] = map[iy * nx + ix];
        }
    }
    out
}

/// Inverse of [`fftshift_2d`].
pub fn ifftshift_2d(map: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = vec![0.0; nx * ny];
    for oy in 0..ny {
        for ox in 0..nx {
            let ix = (ox + nx - nx / 2) % nx;
            let iy = (oy + ny - ny / 2) % ny;
            out[iy * nx + ix] = map[oy * nx + ox];
        }
    }
    out
}
