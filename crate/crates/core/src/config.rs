//! Experiment description (TOML) and the figure presets.
//!
//! Physical quantities carry their unit in the key name.

use serde::{Deserialize, Serialize};

use crate::correlator::Mode;
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::optics::ObjectPreset;
use crate::source::{PumpModel, SourceParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub model: PumpModel,
    pub l_c_mm: f64,
    pub k_per_m: f64,
    pub gvd_s2_per_m: f64,
    pub sigma_p_per_m: f64,
    pub w0_um: f64,
    pub tau0_ps: f64,
    pub nz: usize,
    pub n1: f64,
    pub n2: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection::from_params(&SourceParams::default())
    }
}

impl SourceSection {
    pub fn from_params(p: &SourceParams) -> Self {
        SourceSection {
            model: p.model,
            l_c_mm: p.l_c * 1e3,
            k_per_m: p.k,
            gvd_s2_per_m: p.gvd,
            sigma_p_per_m: p.sigma_p,
            w0_um: p.w0 * 1e6,
            tau0_ps: p.tau0 * 1e12,
            nz: p.nz,
            n1: p.n1,
            n2: p.n2,
        }
    }

    pub fn params(&self) -> SourceParams {
        SourceParams {
            l_c: self.l_c_mm * 1e-3,
            k: self.k_per_m,
            gvd: self.gvd_s2_per_m,
            sigma_p: self.sigma_p_per_m,
            w0: self.w0_um * 1e-6,
            tau0: self.tau0_ps * 1e-12,
            model: self.model,
            nz: self.nz,
            n1: self.n1,
            n2: self.n2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub dx_um: f64,
    pub dy_um: f64,
    pub dt_fs: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection { nx: 256, ny: 1, nt: 1, dx_um: 2.8, dy_um: 2.8, dt_fs: 1000.0 }
    }
}

impl LatticeSection {
    pub fn spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.nx, self.ny, self.nt, self.dx_um * 1e-6, self.dy_um * 1e-6, self.dt_fs * 1e-15)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmsSection {
    pub focal_length_m: f64,
    /// Free-space wavenumber for the lens mappings; defaults to `k / n1`.
    pub k_free_per_m: Option<f64>,
    /// Telescope imaging-plane shift; defaults to the gain-dependent value.
    pub delta_z_um: Option<f64>,
    /// Interference filter half-width in units of Omega0 (none: whole grid).
    pub filter_halfwidth_omega0: Option<f64>,
}

impl Default for ArmsSection {
    fn default() -> Self {
        ArmsSection { focal_length_m: 0.1, k_free_per_m: None, delta_z_um: None, filter_halfwidth_omega0: None }
    }
}

/// One correlator fed by the shared shot stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub name: String,
    pub mode: Mode,
    /// Transverse lattice index of the fixed test pixel.
    #[serde(default)]
    pub x1_index: usize,
    /// Focal-plane stripe filter passing `|q_y| <= w q0` (telescope modes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stripe_halfwidth_q0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub shots: u64,
    pub seed: u64,
    pub threads: usize,
    /// Independent repetitions; error series are RMS-averaged over them.
    pub replicas: usize,
    /// First shot count of the sqrt(2) error schedule.
    pub eps_start: u64,
    /// Interference filter half-widths (units of Omega0) for the oracle
    /// bandwidth study; empty to skip.
    pub filter_study_omega0: Vec<f64>,
    pub out_dir: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            shots: 1000,
            seed: 1,
            threads: 1,
            replicas: 1,
            eps_start: 10,
            filter_study_omega0: Vec::new(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub arms: ArmsSection,
    pub object: ObjectPreset,
    pub channels: Vec<ChannelConfig>,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills every optional physical quantity with its computed default.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let p = c.source.params();
        c.arms.k_free_per_m.get_or_insert(p.default_k_free());
        c.arms.delta_z_um.get_or_insert(p.default_delta_z() * 1e6);
        c
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.lattice.spec()?;
        self.source.params().validate()?;
        if self.channels.is_empty() {
            return Err(Error::Config("at least one channel is required".into()));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if self.channels[..i].iter().any(|c| c.name == ch.name) {
                return Err(Error::Config(format!("duplicate channel name {}", ch.name)));
            }
            if ch.x1_index >= spec.transverse_len() {
                return Err(Error::Config(format!("channel {}: x1_index outside lattice", ch.name)));
            }
            if ch.stripe_halfwidth_q0.is_some() && ch.mode.is_far_field() {
                return Err(Error::Config(format!("channel {}: stripe filter needs a telescope mode", ch.name)));
            }
        }
        if let Some(w) = self.arms.filter_halfwidth_omega0 {
            if w < 0.0 {
                return Err(Error::Config("filter half-width must be >= 0".into()));
            }
        }
        if self.run.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must be below 2^63 (TOML integers are signed)".into()));
        }
        if self.run.replicas == 0 || self.run.threads == 0 {
            return Err(Error::Config("replicas and threads must be >= 1".into()));
        }
        if self.arms.focal_length_m <= 0.0 {
            return Err(Error::Config("focal length must be positive".into()));
        }
        Ok(())
    }
}

pub const PRESETS: &[&str] = &["fig3", "fig3a", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"];

fn channel(name: &str, mode: Mode) -> ChannelConfig {
    ChannelConfig { name: name.into(), mode, x1_index: 0, stripe_halfwidth_q0: None }
}

/// Grid step as a fraction of the default coherence length, in micrometres.
fn xcoh_um(frac: f64) -> f64 {
    SourceParams::default().x_coh() * 1e6 * frac
}

/// Time step (fs) putting the temporal Nyquist frequency at `m` Omega0.
fn dt_for_nyquist(m: f64) -> f64 {
    std::f64::consts::PI / (m * SourceParams::default().omega0()) * 1e15
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = |desc: &str, object: ObjectPreset, channels: Vec<ChannelConfig>| ExperimentConfig {
        preset: Some(name.to_string()),
        description: desc.to_string(),
        source: SourceSection::default(),
        lattice: LatticeSection::default(),
        arms: ArmsSection::default(),
        object,
        channels,
        run: RunSection::default(),
    };
    let slit_paper = ObjectPreset::DoubleSlit { width_px: 5, spacing_px: 30 };
    // 14 um apertures 87 um apart on a 0.56 um grid
    let slit_fine = ObjectPreset::DoubleSlit { width_px: 25, spacing_px: 155 };
    let cfg = match name {
        "fig3" => {
            let mut c = base(
                "1D double slit, f-f arms, Gaussian pump: fixed pixel vs spatial average. \
                 Desk scale: Nx=256 without time, w0=200 um, Nz=25, 4 replicas of 5000 shots.",
                slit_paper,
                vec![channel("fixed", Mode::FfFixedX1), channel("sa", Mode::FfSpatialAverage)],
            );
            c.source.model = PumpModel::GaussianPump;
            c.source.w0_um = 200.0;
            c.source.nz = 25;
            c.run.shots = 5000;
            c.run.replicas = 4;
            c
        }
        "fig3a" => {
            let mut c = base(
                "1D double slit, f-f arms, plane-wave pump with time (Nt=16, Nyquist Omega0) \
                 on a 0.56 um grid: convergence of the fixed-pixel correlation to its oracle.",
                slit_fine,
                vec![channel("fixed", Mode::FfFixedX1), channel("sa", Mode::FfSpatialAverage)],
            );
            c.lattice = LatticeSection { nx: 256, ny: 1, nt: 16, dx_um: 0.56, dy_um: 0.56, dt_fs: dt_for_nyquist(1.0) };
            c.run.shots = 10_000;
            c
        }
        "fig4" => {
            let mut c = base(
                "2D cosine object with y sidebands outside the gain bandwidth, f-f arms, \
                 plane-wave pump without time. Desk scale: 128x128, 4000 shots.",
                ObjectPreset::Cosine2d { qx_q0: 1.0, qy_q0: 3.0 },
                vec![channel("fixed", Mode::FfFixedX1), channel("sa", Mode::FfSpatialAverage)],
            );
            let d = xcoh_um(0.35);
            c.lattice = LatticeSection { nx: 128, ny: 128, nt: 1, dx_um: d, dy_um: d, dt_fs: 1000.0 };
            c.run.shots = 4000;
            c
        }
        "fig5" => {
            let mut c = base(
                "2D pure phase checker (4x4 holes) under a Gaussian envelope, spatial average, \
                 10000 shots on 128x128.",
                ObjectPreset::PhaseChecker { holes: 4, hole_px: 6, pitch_px: 12, envelope_um: Some(xcoh_um(0.35) * 20.0) },
                vec![channel("sa", Mode::FfSpatialAverage)],
            );
            let d = xcoh_um(0.35);
            c.lattice = LatticeSection { nx: 128, ny: 128, nt: 1, dx_um: d, dy_um: d, dt_fs: 1000.0 };
            c.run.shots = 10_000;
            c
        }
        "fig6" => {
            let mut c = base(
                "1D double slit imaged with the telescope arm, pixel and bucket test detector, \
                 plane-wave pump with time (Nt=16) on a 0.56 um grid, 20000 shots.",
                slit_fine,
                vec![channel("pixel", Mode::TelescopePixelX1), channel("bucket", Mode::TelescopeBucket)],
            );
            c.lattice = LatticeSection { nx: 256, ny: 1, nt: 16, dx_um: 0.56, dy_um: 0.56, dt_fs: dt_for_nyquist(1.0) };
            c.run.shots = 20_000;
            c
        }
        "fig7" => {
            let mut c = base(
                "Oracle-only interference-filter study: telescope images and the bucket kernel \
                 for filter half-widths 0, 10, 20, 40 Omega0 (Nt=256, Nyquist 64 Omega0).",
                ObjectPreset::DoubleSlit { width_px: 9, spacing_px: 54 },
                vec![channel("pixel", Mode::TelescopePixelX1), channel("bucket", Mode::TelescopeBucket)],
            );
            let d = xcoh_um(0.1);
            c.lattice = LatticeSection { nx: 1024, ny: 1, nt: 256, dx_um: d, dy_um: d, dt_fs: dt_for_nyquist(64.0) };
            c.run.shots = 0;
            c.run.filter_study_omega0 = vec![0.0, 10.0, 20.0, 40.0];
            c
        }
        "fig8" => {
            let mut c = base(
                "2D letters mask imaged with the telescope arm: coherent (pixel) vs incoherent \
                 (bucket) test detector, 128x128 without time, 4000 shots.",
                ObjectPreset::BitmapLetters { text: Some("INFM".into()), pgm: None, scale: 5 },
                vec![channel("pixel", Mode::TelescopePixelX1), channel("bucket", Mode::TelescopeBucket)],
            );
            let d = xcoh_um(0.35);
            c.lattice = LatticeSection { nx: 128, ny: 128, nt: 1, dx_um: d, dy_um: d, dt_fs: 1000.0 };
            c.run.shots = 4000;
            c
        }
        "fig9" => {
            let mut c = base(
                "2D square cosine pattern, telescope arm with bucket test detector, with and \
                 without a focal-plane stripe passing |q_y| <= q0/2. 128x128, 10000 shots.",
                ObjectPreset::SquareCosine { qx_q0: 1.5, qy_q0: 1.5 },
                vec![
                    ChannelConfig {
                        name: "filtered".into(),
                        mode: Mode::TelescopeBucket,
                        x1_index: 0,
                        stripe_halfwidth_q0: Some(0.5),
                    },
                    channel("open", Mode::TelescopeBucket),
                ],
            );
            let d = xcoh_um(0.35);
            c.lattice = LatticeSection { nx: 128, ny: 128, nt: 1, dx_um: d, dy_um: d, dt_fs: 1000.0 };
            c.run.shots = 10_000;
            c
        }
        _ => return Err(Error::Config(format!("unknown preset {name:?} (known: {})", PRESETS.join(", ")))),
    };
    Ok(cfg)
}
