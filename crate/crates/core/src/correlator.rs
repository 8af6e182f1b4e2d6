//! Streaming estimators of the intensity fluctuation correlation
//! `G = <I1 I2> - <I1><I2>` in four measurement modes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{bucket, IntensityFrame};
use crate::error::{Error, Result};
use crate::lattice::{fft_axes, Axes, Direction, LatticeSpec, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FfFixedX1,
    FfSpatialAverage,
    TelescopePixelX1,
    TelescopeBucket,
}

impl Mode {
    fn code(self) -> u32 {
        match self {
            Mode::FfFixedX1 => 0,
            Mode::FfSpatialAverage => 1,
            Mode::TelescopePixelX1 => 2,
            Mode::TelescopeBucket => 3,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        Ok(match c {
            0 => Mode::FfFixedX1,
            1 => Mode::FfSpatialAverage,
            2 => Mode::TelescopePixelX1,
            3 => Mode::TelescopeBucket,
            _ => return Err(Error::Format(format!("unknown accumulator mode {c}"))),
        })
    }

    pub fn is_far_field(self) -> bool {
        matches!(self, Mode::FfFixedX1 | Mode::FfSpatialAverage)
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Cyclic convolution `sum_x1 a(x1) b(x - x1)` on the transverse lattice.
pub fn cyclic_convolution(spec: &LatticeSpec, a: &[f64], b: &[f64]) -> Vec<f64> {
    let ts = spec.transverse();
    let mut fa: Vec<C64> = a.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut fb: Vec<C64> = b.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft_axes(&ts, &mut fa, Axes::TRANSVERSE, Direction::Forward);
    fft_axes(&ts, &mut fb, Axes::TRANSVERSE, Direction::Forward);
    let sn = (ts.len() as f64).sqrt();
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y * sn;
    }
    fft_axes(&ts, &mut fa, Axes::TRANSVERSE, Direction::Inverse);
    fa.into_iter().map(|v| v.re).collect()
}

/// Finalized correlation, raw and rescaled to unit maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub shots: u64,
}

impl CorrelationMap {
    pub fn from_raw(raw: Vec<f64>, shots: u64) -> Self {
        let m = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scaled = if m > 0.0 { raw.iter().map(|v| v / m).collect() } else { raw.clone() };
        CorrelationMap { raw, scaled, shots }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationAccumulator {
    mode: Mode,
    spec: LatticeSpec,
    x1: usize,
    n: u64,
    s12: Vec<CompensatedSum>,
    s1: Vec<CompensatedSum>,
    s2: Vec<CompensatedSum>,
}

impl CorrelationAccumulator {
    /// `x1` is the transverse index of the fixed test pixel (ignored by the
    /// spatial-average and bucket modes).
    pub fn new(mode: Mode, spec: &LatticeSpec, x1: usize) -> Result<Self> {
        let spec = spec.transverse();
        let n = spec.transverse_len();
        if x1 >= n {
            return Err(Error::Contract(format!("x1 index {x1} outside lattice of {n} sites")));
        }
        let n1 = if mode == Mode::FfSpatialAverage { n } else { 1 };
        Ok(CorrelationAccumulator {
            mode,
            spec,
            x1,
            n: 0,
            s12: vec![CompensatedSum::default(); n],
            s1: vec![CompensatedSum::default(); n1],
            s2: vec![CompensatedSum::default(); n],
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn shots(&self) -> u64 {
        self.n
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn accumulate(&mut self, i1: &IntensityFrame, i2: &IntensityFrame) -> Result<()> {
        let n = self.spec.transverse_len();
        if i1.values.len() != n || i2.values.len() != n {
            return Err(Error::Contract("frame size does not match accumulator lattice".into()));
        }
        match self.mode {
            Mode::FfSpatialAverage => {
                let conv = cyclic_convolution(&self.spec, &i1.values, &i2.values);
                let da = self.spec.cell_area();
                for (s, c) in self.s12.iter_mut().zip(conv) {
                    s.add(c * da);
                }
                for (s, v) in self.s1.iter_mut().zip(&i1.values) {
                    s.add(*v);
                }
            }
            Mode::FfFixedX1 | Mode::TelescopePixelX1 | Mode::TelescopeBucket => {
                let a = if self.mode == Mode::TelescopeBucket {
                    bucket(i1, &self.spec)
                } else {
                    i1.values[self.x1]
                };
                for (s, v) in self.s12.iter_mut().zip(&i2.values) {
                    s.add(a * v);
                }
                self.s1[0].add(a);
            }
        }
        for (s, v) in self.s2.iter_mut().zip(&i2.values) {
            s.add(*v);
        }
        self.n += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        if self.mode != other.mode || self.spec != other.spec || self.x1 != other.x1 {
            return Err(Error::Contract("cannot merge accumulators of different setups".into()));
        }
        for (a, b) in [(&mut self.s12, &other.s12), (&mut self.s1, &other.s1), (&mut self.s2, &other.s2)] {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        self.n += other.n;
        Ok(())
    }

    pub fn finalize(&self) -> Result<CorrelationMap> {
        if self.n < 2 {
            return Err(Error::TooFewShots(self.n));
        }
        let inv = 1.0 / self.n as f64;
        let m2: Vec<f64> = self.s2.iter().map(|s| s.value() * inv).collect();
        let raw = match self.mode {
            Mode::FfSpatialAverage => {
                let m1: Vec<f64> = self.s1.iter().map(|s| s.value() * inv).collect();
                let bg = cyclic_convolution(&self.spec, &m1, &m2);
                let da = self.spec.cell_area();
                self.s12.iter().zip(bg).map(|(s, b)| s.value() * inv - b * da).collect()
            }
            _ => {
                let m1 = self.s1[0].value() * inv;
                self.s12.iter().zip(&m2).map(|(s, b)| s.value() * inv - m1 * b).collect()
            }
        };
        Ok(CorrelationMap::from_raw(raw, self.n))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.mode.code().to_le_bytes());
        for v in [self.x1 as u64, self.spec.nx as u64, self.spec.ny as u64, self.spec.nt as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.spec.dx, self.spec.dy, self.spec.dt] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.n.to_le_bytes());
        for arr in [&self.s12, &self.s1, &self.s2] {
            out.extend_from_slice(&(arr.len() as u64).to_le_bytes());
            for s in arr.iter() {
                out.extend_from_slice(&s.sum.to_le_bytes());
                out.extend_from_slice(&s.comp.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(short)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not an accumulator checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mode = Mode::from_code(read_u32(&mut r)?)?;
        let x1 = read_u64(&mut r)? as usize;
        let (nx, ny, nt) = (read_u64(&mut r)? as usize, read_u64(&mut r)? as usize, read_u64(&mut r)? as usize);
        let (dx, dy, dt) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
        let spec = LatticeSpec::new(nx, ny, nt, dx, dy, dt)?;
        let mut acc = CorrelationAccumulator::new(mode, &spec, x1)?;
        acc.n = read_u64(&mut r)?;
        for arr in [&mut acc.s12, &mut acc.s1, &mut acc.s2] {
            let len = read_u64(&mut r)? as usize;
            if len != arr.len() {
                return Err(Error::Format("checkpoint array length mismatch".into()));
            }
            for s in arr.iter_mut() {
                s.sum = read_f64(&mut r)?;
                s.comp = read_f64(&mut r)?;
            }
        }
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        Ok(acc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"GACC";
const CHECKPOINT_VERSION: u32 = 1;

fn short(_: std::io::Error) -> Error {
    Error::Format("truncated checkpoint".into())
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(short)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(short)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(short)?;
    Ok(f64::from_le_bytes(b))
}
