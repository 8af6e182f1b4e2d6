use crate::error::{Error, Result};
use crate::lattice::{ComplexField, Domain, LatticeSpec};

/// Time-averaged intensity per transverse site.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    pub values: Vec<f64>,
    pub shot: u64,
    vacuum_corrected: bool,
}

impl IntensityFrame {
    pub fn new(values: Vec<f64>, shot: u64) -> Self {
        IntensityFrame { values, shot, vacuum_corrected: false }
    }

    pub fn is_vacuum_corrected(&self) -> bool {
        self.vacuum_corrected
    }
}

/// `I(x) = (1/Nt) sum_t |c(x,t)|^2`.
pub fn detect(c: &ComplexField, shot: u64) -> Result<IntensityFrame> {
    if c.domain() != Domain::Position {
        return Err(Error::Contract("detector needs a position-space field".into()));
    }
    let spec = c.spec();
    let n = spec.transverse_len();
    let mut values = vec![0.0; n];
    for (i, v) in c.data().iter().enumerate() {
        values[i % n] += v.norm_sqr();
    }
    let inv = 1.0 / spec.nt as f64;
    for v in values.iter_mut() {
        *v *= inv;
    }
    Ok(IntensityFrame::new(values, shot))
}

/// `B = sum_x I(x) dA`.
pub fn bucket(frame: &IntensityFrame, spec: &LatticeSpec) -> f64 {
    frame.values.iter().sum::<f64>() * spec.cell_area()
}

/// Subtracts the symmetric-ordering vacuum level (1/2 per mode) and clamps at
/// zero. Returns the corrected frame and the clamped mass.
pub fn vacuum_correction(frame: &IntensityFrame, _spec: &LatticeSpec) -> Result<(IntensityFrame, f64)> {
    vacuum_correction_level(frame, 0.5)
}

/// As [`vacuum_correction`] with an explicit level, for arms whose vacuum
/// content was reduced by filters.
pub fn vacuum_correction_level(frame: &IntensityFrame, level: f64) -> Result<(IntensityFrame, f64)> {
    if frame.vacuum_corrected {
        return Err(Error::Contract("vacuum correction already applied".into()));
    }
    let mut clamped = 0.0;
    let values = frame
        .values
        .iter()
        .map(|&v| {
            let r = v - level;
            if r < 0.0 {
                clamped -= r;
                0.0
            } else {
                r
            }
        })
        .collect();
    Ok((IntensityFrame { values, shot: frame.shot, vacuum_corrected: true }, clamped))
}
