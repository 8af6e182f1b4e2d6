//! Grid export: GIMG binary maps, PGM previews and CSV helpers.
//!
//! GIMG layout (little endian): magic `GIMG`, u32 version, u32 nx, u32 ny,
//! f64 dx, f64 dy, then `nx*ny` f64 values row-major (x fastest). Maps are
//! written centered, i.e. the lattice origin sits at `(nx/2, ny/2)`.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{fftshift_2d, ifftshift_2d};

const MAGIC: &[u8; 4] = b"GIMG";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Centered values, row-major.
    pub values: Vec<f64>,
}

impl GridImage {
    /// Wraps a lattice-ordered map (origin at index 0), centering it.
    pub fn from_lattice(map: &[f64], nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        GridImage { nx, ny, dx, dy, values: fftshift_2d(map, nx, ny) }
    }

    /// Values back in lattice order.
    pub fn to_lattice(&self) -> Vec<f64> {
        ifftshift_2d(&self.values, self.nx, self.ny)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        out.extend_from_slice(&self.dx.to_le_bytes());
        out.extend_from_slice(&self.dy.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let bad = |_| Error::Format("truncated GIMG file".into());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a GIMG file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(bad)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported GIMG version {version}")));
        }
        r.read_exact(&mut b4).map_err(bad)?;
        let nx = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4).map_err(bad)?;
        let ny = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8).map_err(bad)?;
        let dx = f64::from_le_bytes(b8);
        r.read_exact(&mut b8).map_err(bad)?;
        let dy = f64::from_le_bytes(b8);
        if r.len() != 8 * nx * ny {
            return Err(Error::Format(format!("GIMG payload has {} bytes, expected {}", r.len(), 8 * nx * ny)));
        }
        let values = r.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(GridImage { nx, ny, dx, dy, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// 16-bit binary PGM normalized to the map maximum; negatives clip to 0.
    pub fn pgm_preview(&self) -> Vec<u8> {
        let m = self.values.iter().cloned().fold(0.0, f64::max);
        let mut out = format!("P5\n{} {}\n65535\n", self.nx, self.ny).into_bytes();
        // PGM rows run top to bottom: emit largest y first
        for row in (0..self.ny).rev() {
            for v in &self.values[row * self.nx..(row + 1) * self.nx] {
                let s = if m > 0.0 { (v / m).clamp(0.0, 1.0) } else { 0.0 };
                out.extend_from_slice(&((s * 65535.0).round() as u16).to_be_bytes());
            }
        }
        out
    }
}

/// CSV of a 1D profile: header `x,<names...>` with centered coordinates.
pub fn profiles_csv(x_label: &str, dx: f64, names: &[&str], columns: &[&[f64]]) -> String {
    let n = columns.first().map_or(0, |c| c.len());
    let mut s = String::from(x_label);
    for name in names {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    let shifted: Vec<Vec<f64>> = columns.iter().map(|c| fftshift_2d(c, n, 1)).collect();
    for i in 0..n {
        s.push_str(&format!("{:.6e}", (i as f64 - (n / 2) as f64) * dx));
        for c in &shifted {
            s.push_str(&format!(",{:.10e}", c[i]));
        }
        s.push('\n');
    }
    s
}
