//! Object masks, arm propagators and filters.
//!
//! The f-f arms output fields indexed by spectral lattice site; the physical
//! detector coordinate is `x = q f / k_free` and is carried as metadata
//! ([`far_field_pitch`]) instead of resampling.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{fft_axes, signed_index, Axes, ComplexField, Direction, Domain, LatticeSpec, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectPreset {
    /// Fully transmitting.
    Open,
    /// Two apertures along x (stripes along y in 2D), centered on the origin.
    DoubleSlit { width_px: usize, spacing_px: usize },
    /// `[1 + cos(qx x)][1 + cos(qy y)]/4`, frequencies in units of q0.
    Cosine2d { qx_q0: f64, qy_q0: f64 },
    /// Same formula as `Cosine2d`; kept separate for the stripe-filter study.
    SquareCosine { qx_q0: f64, qy_q0: f64 },
    /// `holes x holes` square holes with T = -1 in a T = +1 plane, under an
    /// optional Gaussian envelope `exp(-r^2/w^2)`.
    PhaseChecker { holes: usize, hole_px: usize, pitch_px: usize, envelope_um: Option<f64> },
    /// Binary mask from built-in glyphs (`text`) or an 8-bit PGM file.
    BitmapLetters { text: Option<String>, pgm: Option<PathBuf>, scale: usize },
}

#[derive(Debug, Clone)]
pub struct ObjectMask {
    /// Transmission per transverse site.
    pub t: Vec<C64>,
    pub descriptor: String,
}

impl ObjectMask {
    pub fn intensity(&self) -> Vec<f64> {
        self.t.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Unitary transverse transform of the mask.
    pub fn spectrum(&self, spec: &LatticeSpec) -> Vec<C64> {
        let ts = spec.transverse();
        let mut d = self.t.clone();
        fft_axes(&ts, &mut d, Axes::TRANSVERSE, Direction::Forward);
        d
    }
}

/// Nearest lattice frequency to `q` on an axis with spacing `dq`.
pub fn snap_frequency(q: f64, dq: f64) -> f64 {
    let s = (q / dq).round() * dq;
    if (s - q).abs() > 0.01 * q.abs() {
        warn!("object frequency {q:.4e} snapped to lattice value {s:.4e}");
    }
    s
}

pub fn make_object(preset: &ObjectPreset, spec: &LatticeSpec, q0: f64) -> Result<ObjectMask> {
    let (nx, ny) = (spec.nx, spec.ny);
    let n = nx * ny;
    let one = C64::new(1.0, 0.0);
    let sx = |ix: usize| signed_index(ix, nx);
    let sy = |iy: usize| signed_index(iy, ny);
    let t = match preset {
        ObjectPreset::Open => vec![one; n],
        ObjectPreset::DoubleSlit { width_px, spacing_px } => {
            let (w, d) = (*width_px as i64, *spacing_px as i64);
            if w == 0 || w > d || (d + w) as usize > nx {
                return Err(Error::Config(format!(
                    "double slit (width {w}, spacing {d}) does not fit {nx} sites"
                )));
            }
            // aperture j covers offsets [c - w/2, c - w/2 + w) around c = +-d/2
            let inside = |x: i64| {
                [-d / 2, d - d / 2].iter().any(|&c| {
                    let lo = c - w / 2;
                    x >= lo && x < lo + w
                })
            };
            (0..n).map(|i| if inside(sx(i % nx)) { one } else { C64::new(0.0, 0.0) }).collect()
        }
        ObjectPreset::Cosine2d { qx_q0, qy_q0 } | ObjectPreset::SquareCosine { qx_q0, qy_q0 } => {
            let qx = snap_frequency(qx_q0 * q0, spec.dq_x());
            let qy = if spec.is_2d() { snap_frequency(qy_q0 * q0, spec.dq_y()) } else { 0.0 };
            (0..n)
                .map(|i| {
                    let (ix, iy) = (i % nx, i / nx);
                    let v = (1.0 + (qx * spec.x(ix)).cos()) * (1.0 + (qy * spec.y(iy)).cos()) / 4.0;
                    C64::new(v, 0.0)
                })
                .collect()
        }
        ObjectPreset::PhaseChecker { holes, hole_px, pitch_px, envelope_um } => {
            let (h, a, p) = (*holes as i64, *hole_px as i64, *pitch_px as i64);
            if a == 0 || a > p {
                return Err(Error::Config("phase checker needs 0 < hole_px <= pitch_px".into()));
            }
            let extent = (h - 1) * p + a;
            if extent as usize > nx || (spec.is_2d() && extent as usize > ny) {
                return Err(Error::Config(format!("phase checker extent {extent} exceeds lattice")));
            }
            // hole centers at (j - (h-1)/2) * pitch
            let in_hole = |s: i64| {
                (0..h).any(|j| {
                    let lo = 2 * j * p - (h - 1) * p - a;
                    let v = 2 * s;
                    v >= lo && v < lo + 2 * a
                })
            };
            let w = envelope_um.map(|w| w * 1e-6);
            (0..n)
                .map(|i| {
                    let (ix, iy) = (i % nx, i / nx);
                    let hole = in_hole(sx(ix)) && (!spec.is_2d() || in_hole(sy(iy)));
                    let env = match w {
                        Some(w) => (-(spec.x(ix).powi(2) + spec.y(iy).powi(2)) / (w * w)).exp(),
                        None => 1.0,
                    };
                    C64::new(if hole { -env } else { env }, 0.0)
                })
                .collect()
        }
        ObjectPreset::BitmapLetters { text, pgm, scale } => {
            let bm = match (text, pgm) {
                (_, Some(path)) => load_pgm(path)?,
                (Some(text), None) => glyph_bitmap(text)?,
                (None, None) => return Err(Error::Config("bitmap_letters needs text or pgm".into())),
            };
            place_bitmap(&bm, (*scale).max(1), spec)?
        }
    };
    Ok(ObjectMask { t, descriptor: format!("{preset:?}") })
}

/// Monochrome bitmap, row-major, `true` = transmitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Bitmap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

const GLYPHS: &[(char, [&str; 7])] = &[
    ('I', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"]),
    ('N', ["#...#", "##..#", "#.#.#", "#.#.#", "#.#.#", "#..##", "#...#"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('M', ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"]),
    (' ', [".....", ".....", ".....", ".....", ".....", ".....", "....."]),
];

/// Renders `text` with the built-in 5x7 font, one blank column between glyphs.
pub fn glyph_bitmap(text: &str) -> Result<Bitmap> {
    let chars: Vec<char> = text.chars().map(|c| c.to_ascii_uppercase()).collect();
    if chars.is_empty() {
        return Err(Error::Config("empty glyph text".into()));
    }
    let width = chars.len() * 6 - 1;
    let height = 7;
    let mut pixels = vec![false; width * height];
    for (k, c) in chars.iter().enumerate() {
        let rows = GLYPHS
            .iter()
            .find(|(g, _)| g == c)
            .map(|(_, r)| r)
            .ok_or_else(|| Error::Config(format!("no built-in glyph for {c:?}")))?;
        for (r, row) in rows.iter().enumerate() {
            for (col, ch) in row.chars().enumerate() {
                pixels[r * width + k * 6 + col] = ch == '#';
            }
        }
    }
    Ok(Bitmap { width, height, pixels })
}

/// Reads a binary 8-bit PGM (P5); values >= 128 transmit.
pub fn load_pgm(path: &Path) -> Result<Bitmap> {
    parse_pgm(&std::fs::read(path)?)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Bitmap> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1; // single whitespace before raster
    if fields[0] != "P5" {
        return Err(Error::Format(format!("expected P5 PGM, found {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM field {s}")));
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("only 8-bit PGM supported (maxval {maxval})")));
    }
    let raster = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
    Ok(Bitmap { width, height, pixels: raster.iter().map(|&b| b >= 128).collect() })
}

fn place_bitmap(bm: &Bitmap, scale: usize, spec: &LatticeSpec) -> Result<Vec<C64>> {
    let (nx, ny) = (spec.nx, spec.ny);
    let (w, h) = (bm.width * scale, bm.height * scale);
    let rows = if spec.is_2d() { h } else { 1 };
    if w > nx || rows > ny {
        return Err(Error::Config(format!("bitmap {w}x{h} exceeds lattice {nx}x{ny}")));
    }
    let mut t = vec![C64::new(0.0, 0.0); nx * ny];
    for r in 0..rows {
        // image row 0 is the top: largest y
        let src_row = if spec.is_2d() { r / scale } else { bm.height / 2 };
        let oy = (rows / 2) as i64 - r as i64 - 1;
        let iy = oy.rem_euclid(ny as i64) as usize;
        for c in 0..w {
            let ox = c as i64 - (w / 2) as i64;
            let ix = ox.rem_euclid(nx as i64) as usize;
            if bm.pixels[src_row * bm.width + c / scale] {
                t[iy * nx + ix] = C64::new(1.0, 0.0);
            }
        }
    }
    Ok(t)
}

/// Detector pitch in an f-f focal plane: `(dq_x f/k, dq_y f/k)`.
pub fn far_field_pitch(spec: &LatticeSpec, f: f64, k_free: f64) -> (f64, f64) {
    (spec.dq_x() * f / k_free, spec.dq_y() * f / k_free)
}

fn transverse_transform(field: &ComplexField, dir: Direction) -> Result<Vec<C64>> {
    if field.domain() != Domain::Position {
        return Err(Error::Contract("arm propagators take position-space fields".into()));
    }
    let mut d = field.data().to_vec();
    fft_axes(field.spec(), &mut d, Axes::TRANSVERSE, dir);
    Ok(d)
}

/// Object then lens: `c1(x1) = F[T b1](q = k x1/f)` for every time bin.
pub fn propagate_test_ff(b1: &ComplexField, obj: &ObjectMask) -> Result<ComplexField> {
    let spec = *b1.spec();
    let nt = spec.transverse_len();
    if obj.t.len() != nt {
        return Err(Error::Contract("object mask does not match lattice".into()));
    }
    if b1.domain() != Domain::Position {
        return Err(Error::Contract("arm propagators take position-space fields".into()));
    }
    let mut d: Vec<C64> = b1.data().iter().enumerate().map(|(i, v)| v * obj.t[i % nt]).collect();
    fft_axes(&spec, &mut d, Axes::TRANSVERSE, Direction::Forward);
    ComplexField::new(spec, Domain::Position, d)
}

pub fn propagate_reference_ff(b2: &ComplexField) -> Result<ComplexField> {
    let d = transverse_transform(b2, Direction::Forward)?;
    ComplexField::new(*b2.spec(), Domain::Position, d)
}

/// Fresnel transfer function `exp(-i |q|^2 dz / 2k)` on the transverse lattice.
pub fn fresnel_transfer(spec: &LatticeSpec, delta_z: f64, k_free: f64) -> Vec<C64> {
    (0..spec.transverse_len())
        .map(|j| {
            let (ix, iy) = (j % spec.nx, j / spec.nx);
            let q2 = spec.qx(ix).powi(2) + if spec.is_2d() { spec.qy(iy).powi(2) } else { 0.0 };
            C64::from_polar(1.0, -q2 * delta_z / (2.0 * k_free))
        })
        .collect()
}

/// Multiplies the transverse spectrum of every time bin by `h(q)`.
fn apply_transverse_transfer(field: &ComplexField, h: &[C64]) -> Result<ComplexField> {
    let spec = *field.spec();
    let n = spec.transverse_len();
    let mut d = transverse_transform(field, Direction::Forward)?;
    for (i, v) in d.iter_mut().enumerate() {
        *v *= h[i % n];
    }
    fft_axes(&spec, &mut d, Axes::TRANSVERSE, Direction::Inverse);
    ComplexField::new(spec, Domain::Position, d)
}

/// Telescope arm: Fresnel shift of the imaged plane by `delta_z`, then identity.
pub fn propagate_reference_telescope(b2: &ComplexField, delta_z: f64, k_free: f64) -> Result<ComplexField> {
    apply_transverse_transfer(b2, &fresnel_transfer(b2.spec(), delta_z, k_free))
}

/// Real transmission mask over the focal plane of the first telescope lens.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalPlaneFilter {
    /// Transmission per transverse spectral site.
    pub mask: Vec<f64>,
}

impl FocalPlaneFilter {
    pub fn open(spec: &LatticeSpec) -> Self {
        FocalPlaneFilter { mask: vec![1.0; spec.transverse_len()] }
    }

    /// Passes only `|q_y| <= halfwidth`.
    pub fn stripe_y(spec: &LatticeSpec, halfwidth: f64) -> Self {
        let tol = 1e-9 * spec.dq_y();
        let mask = (0..spec.transverse_len())
            .map(|j| if spec.qy(j / spec.nx).abs() <= halfwidth + tol { 1.0 } else { 0.0 })
            .collect();
        FocalPlaneFilter { mask }
    }
}

pub fn apply_focal_plane_filter(b2: &ComplexField, filter: &FocalPlaneFilter) -> Result<ComplexField> {
    let h: Vec<C64> = filter.mask.iter().map(|&m| C64::new(m, 0.0)).collect();
    apply_transverse_transfer(b2, &h)
}

/// Telescope with an optional focal-plane filter, in one transform round trip.
pub fn telescope_transfer(
    spec: &LatticeSpec,
    delta_z: f64,
    k_free: f64,
    filter: Option<&FocalPlaneFilter>,
) -> Vec<C64> {
    let mut h = fresnel_transfer(spec, delta_z, k_free);
    if let Some(f) = filter {
        for (v, m) in h.iter_mut().zip(&f.mask) {
            *v *= *m;
        }
    }
    h
}

pub fn propagate_reference_telescope_filtered(b2: &ComplexField, transfer: &[C64]) -> Result<ComplexField> {
    apply_transverse_transfer(b2, transfer)
}

/// Zeroes temporal frequencies with `|W| > halfwidth`.
pub fn apply_interference_filter(field: &ComplexField, halfwidth: f64) -> Result<ComplexField> {
    let spec = *field.spec();
    if halfwidth >= spec.omega_nyquist() {
        warn!("interference filter half-width is at or above the grid Nyquist frequency; not applied");
        return Ok(field.clone());
    }
    if field.domain() != Domain::Position {
        return Err(Error::Contract("interference filter takes position-space fields".into()));
    }
    let mut d = field.data().to_vec();
    filter_time_in_place(&spec, &mut d, halfwidth);
    ComplexField::new(spec, Domain::Position, d)
}

pub(crate) fn filter_time_in_place(spec: &LatticeSpec, d: &mut [C64], halfwidth: f64) {
    fft_axes(spec, d, Axes::TIME, Direction::Forward);
    let n = spec.transverse_len();
    let tol = 1e-9 * spec.d_omega();
    for it in 0..spec.nt {
        if spec.omega(it).abs() > halfwidth + tol {
            d[it * n..(it + 1) * n].fill(C64::new(0.0, 0.0));
        }
    }
    fft_axes(spec, d, Axes::TIME, Direction::Inverse);
}
