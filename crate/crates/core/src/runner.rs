//! Run orchestration: shot generation, arms, detection, accumulation and
//! error snapshots, plus writing the result bundle.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ChannelConfig, ExperimentConfig};
use crate::correlator::{CorrelationAccumulator, CorrelationMap, Mode};
use crate::detection::{detect, IntensityFrame};
use crate::error::{Error, Result};
use crate::io::{profiles_csv, GridImage};
use crate::lattice::{shot_rng, LatticeSpec, C64};
use crate::metrics::{epsilon, fit_convergence, sqrt2_schedule, ConvergenceFit, ErrorSeries};
use crate::optics::{
    far_field_pitch, filter_time_in_place, make_object, propagate_reference_ff,
    propagate_reference_telescope_filtered, propagate_test_ff, telescope_transfer, FocalPlaneFilter, ObjectMask,
};
use crate::oracle::{
    bandwidth_pdc, fwhm_x, gamma_bucket_kernel, ift_reconstruct, near_field_correlation, near_field_correlation_with, oracle_ff, oracle_ff_sa,
    oracle_telescope_bucket, oracle_telescope_pixel,
};
use crate::source::{band_indices, compute_gain, generate_shot_plane_wave, GainTable, PumpModel, SourceParams, SplitStepPropagator};

pub struct Channel {
    pub config: ChannelConfig,
    transfer: Option<Vec<C64>>,
    pub oracle: Vec<f64>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub params: SourceParams,
    pub spec: LatticeSpec,
    pub gain: GainTable,
    pub object: ObjectMask,
    /// Temporal frequency bins passed by the interference filter.
    pub band: Vec<usize>,
    filter_halfwidth: Option<f64>,
    propagator: Option<SplitStepPropagator>,
    pub channels: Vec<Channel>,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let params = config.source.params();
        let spec = config.lattice.spec()?;
        let gain = compute_gain(&params, &spec)?;
        let object = make_object(&config.object, &spec, params.q0())?;
        let filter_halfwidth = match config.arms.filter_halfwidth_omega0 {
            Some(w) if w * params.omega0() < spec.omega_nyquist() => Some(w * params.omega0()),
            Some(_) => {
                warn!("interference filter is wider than the temporal grid; not applied");
                None
            }
            None => None,
        };
        let band = band_indices(&spec, filter_halfwidth);
        let propagator = match params.model {
            PumpModel::GaussianPump => Some(SplitStepPropagator::new(&params, &spec)?),
            PumpModel::PlaneWave => None,
        };
        let k_free = config.arms.k_free_per_m.expect("resolved");
        let dz = config.arms.delta_z_um.expect("resolved") * 1e-6;
        let mut channels = Vec::new();
        for ch in &config.channels {
            let transfer = match ch.mode {
                Mode::TelescopePixelX1 | Mode::TelescopeBucket => {
                    let filter = ch.stripe_halfwidth_q0.map(|w| FocalPlaneFilter::stripe_y(&spec, w * params.q0()));
                    Some(telescope_transfer(&spec, dz, k_free, filter.as_ref()))
                }
                _ => None,
            };
            let oracle = match ch.mode {
                Mode::FfFixedX1 => oracle_ff(&gain, &object, ch.x1_index, &band),
                Mode::FfSpatialAverage => oracle_ff_sa(&gain, &object, &band).exact,
                Mode::TelescopePixelX1 => {
                    oracle_telescope_pixel(&gain, &object, ch.x1_index, transfer.as_ref().unwrap(), &band)
                }
                Mode::TelescopeBucket => oracle_telescope_bucket(&gain, &object, transfer.as_ref().unwrap(), &band),
            };
            channels.push(Channel { config: ch.clone(), transfer, oracle });
        }
        Ok(Experiment { config, params, spec, gain, object, band, filter_halfwidth, propagator, channels })
    }

    fn stream(replica: usize, shot: u64) -> u64 {
        ((replica as u64) << 40) | shot
    }

    /// Test-arm frame and one reference frame per channel for one shot.
    pub fn shot_frames(&self, replica: usize, shot: u64) -> Result<(IntensityFrame, Vec<IntensityFrame>)> {
        let mut rng = shot_rng(self.config.run.seed, Self::stream(replica, shot));
        let mut pair = match &self.propagator {
            Some(p) => p.generate_shot(&mut rng),
            None => generate_shot_plane_wave(&self.gain, &mut rng),
        };
        if let Some(w) = self.filter_halfwidth {
            filter_time_in_place(&self.spec, pair.b1.data_mut(), w);
            filter_time_in_place(&self.spec, pair.b2.data_mut(), w);
        }
        let i1 = detect(&propagate_test_ff(&pair.b1, &self.object)?, shot)?;
        let mut ff: Option<IntensityFrame> = None;
        let mut frames = Vec::with_capacity(self.channels.len());
        for ch in &self.channels {
            let f = match &ch.transfer {
                Some(h) => detect(&propagate_reference_telescope_filtered(&pair.b2, h)?, shot)?,
                None => {
                    if ff.is_none() {
                        ff = Some(detect(&propagate_reference_ff(&pair.b2)?, shot)?);
                    }
                    ff.clone().unwrap()
                }
            };
            frames.push(f);
        }
        Ok((i1, frames))
    }

    pub fn new_accumulators(&self) -> Result<Vec<CorrelationAccumulator>> {
        self.channels
            .iter()
            .map(|c| CorrelationAccumulator::new(c.config.mode, &self.spec, c.config.x1_index))
            .collect()
    }

    /// Accumulates shots `start..end` of one replica sequentially.
    pub fn run_range(&self, replica: usize, start: u64, end: u64) -> Result<Vec<CorrelationAccumulator>> {
        let mut accs = self.new_accumulators()?;
        for shot in start..end {
            let (i1, frames) = self.shot_frames(replica, shot)?;
            for (acc, i2) in accs.iter_mut().zip(&frames) {
                acc.accumulate(&i1, i2)?;
            }
        }
        Ok(accs)
    }

    /// Shots `start..end` split into `threads` contiguous shards, merged in
    /// shard order so a fixed thread count is bit-reproducible.
    fn run_sharded(&self, pool: &rayon::ThreadPool, replica: usize, start: u64, end: u64) -> Result<Vec<CorrelationAccumulator>> {
        let threads = self.config.run.threads as u64;
        let len = end - start;
        let bounds: Vec<(u64, u64)> = (0..threads)
            .map(|k| (start + len * k / threads, start + len * (k + 1) / threads))
            .filter(|(a, b)| b > a)
            .collect();
        let parts: Vec<Result<Vec<CorrelationAccumulator>>> =
            pool.install(|| bounds.par_iter().map(|&(a, b)| self.run_range(replica, a, b)).collect());
        let mut total = self.new_accumulators()?;
        for part in parts {
            for (t, p) in total.iter_mut().zip(part?) {
                t.merge(&p)?;
            }
        }
        Ok(total)
    }

    pub fn schedule(&self) -> Vec<u64> {
        let shots = self.config.run.shots;
        if shots < 2 {
            return Vec::new();
        }
        sqrt2_schedule(self.config.run.eps_start.min(shots), shots)
    }

    /// One replica: accumulators after all shots and the error series of
    /// every channel against its oracle.
    pub fn run_replica(&self, pool: &rayon::ThreadPool, replica: usize) -> Result<(Vec<CorrelationAccumulator>, Vec<ErrorSeries>)> {
        let mut accs = self.new_accumulators()?;
        let mut series: Vec<ErrorSeries> =
            self.channels.iter().map(|c| ErrorSeries::new(format!("{}_oracle", c.config.name))).collect();
        let mut done = 0;
        for n in self.schedule() {
            let part = self.run_sharded(pool, replica, done, n)?;
            for (a, p) in accs.iter_mut().zip(&part) {
                a.merge(p)?;
            }
            done = n;
            for ((a, ch), s) in accs.iter().zip(&self.channels).zip(series.iter_mut()) {
                let map = a.finalize()?;
                s.push(n, epsilon(&map.raw, &ch.oracle)?)?;
            }
        }
        Ok((accs, series))
    }

    pub fn run(&self) -> Result<RunResult> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.run.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        let nrep = self.config.run.replicas;
        let mut merged: Option<Vec<CorrelationAccumulator>> = None;
        let mut per_channel: Vec<Vec<ErrorSeries>> = vec![Vec::new(); self.channels.len()];
        if self.config.run.shots >= 2 {
            for r in 0..nrep {
                info!("replica {}/{}: {} shots", r + 1, nrep, self.config.run.shots);
                let (accs, series) = self.run_replica(&pool, r)?;
                for (k, s) in series.into_iter().enumerate() {
                    per_channel[k].push(s);
                }
                match merged.as_mut() {
                    None => merged = Some(accs),
                    Some(m) => {
                        for (a, b) in m.iter_mut().zip(&accs) {
                            a.merge(b)?;
                        }
                    }
                }
            }
        }
        let k_free = self.config.arms.k_free_per_m.expect("resolved");
        let mut channels = Vec::new();
        for (k, ch) in self.channels.iter().enumerate() {
            let map = match &merged {
                Some(m) => Some(m[k].finalize()?),
                None => None,
            };
            let series = if per_channel[k].is_empty() {
                ErrorSeries::new(format!("{}_oracle", ch.config.name))
            } else {
                ErrorSeries::rms_of(&per_channel[k])?
            };
            let fit = if series.entries.len() >= 8 {
                match fit_convergence(&series) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        warn!("channel {}: {e}", ch.config.name);
                        None
                    }
                }
            } else {
                None
            };
            let pitch = if ch.config.mode.is_far_field() {
                far_field_pitch(&self.spec, self.config.arms.focal_length_m, k_free)
            } else {
                (self.spec.dx, self.spec.dy)
            };
            channels.push(ChannelResult {
                name: ch.config.name.clone(),
                mode: ch.config.mode,
                oracle: ch.oracle.clone(),
                final_epsilon: series.last(),
                map,
                replica_series: std::mem::take(&mut per_channel[k]),
                series,
                fit,
                pitch,
            });
        }
        let filter_study = if self.config.run.filter_study_omega0.is_empty() {
            None
        } else {
            Some(self.filter_study()?)
        };
        let nf = near_field_correlation(&self.gain);
        let bw = bandwidth_pdc(&self.gain, &self.band);
        Ok(RunResult {
            config: self.config.clone(),
            spec: self.spec,
            x_coh: nf.x_coh(),
            bandwidth_pdc: bw,
            rho_sa: bw / self.params.delta_q_p(),
            channels,
            filter_study,
        })
    }

    /// Oracle images and bucket kernels for several interference filters.
    pub fn filter_study(&self) -> Result<FilterStudy> {
        // kernel of the first telescope channel, so it matches the bucket images
        let transfer = self.channels.iter().find_map(|c| c.transfer.as_deref());
        let nf = near_field_correlation_with(&self.gain, transfer);
        let mut study = FilterStudy {
            halfwidths_omega0: self.config.run.filter_study_omega0.clone(),
            gamma_b: Vec::new(),
            fwhm: Vec::new(),
            images: self.channels.iter().map(|c| (c.config.name.clone(), Vec::new())).collect(),
        };
        for &w in &study.halfwidths_omega0 {
            let band = band_indices(&self.spec, Some(w * self.params.omega0()));
            let kb = gamma_bucket_kernel(&nf, &band);
            study.fwhm.push(fwhm_x(&kb, &self.spec));
            study.gamma_b.push(kb);
            for (ch, img) in self.channels.iter().zip(study.images.iter_mut()) {
                let g = match (ch.config.mode, &ch.transfer) {
                    (Mode::TelescopePixelX1, Some(h)) => oracle_telescope_pixel(&self.gain, &self.object, ch.config.x1_index, h, &band),
                    (Mode::TelescopeBucket, Some(h)) => oracle_telescope_bucket(&self.gain, &self.object, h, &band),
                    (Mode::FfFixedX1, _) => oracle_ff(&self.gain, &self.object, ch.config.x1_index, &band),
                    _ => oracle_ff_sa(&self.gain, &self.object, &band).exact,
                };
                img.1.push(g);
            }
        }
        Ok(study)
    }
}

pub struct ChannelResult {
    pub name: String,
    pub mode: Mode,
    pub oracle: Vec<f64>,
    pub map: Option<CorrelationMap>,
    /// RMS over replicas.
    pub series: ErrorSeries,
    pub replica_series: Vec<ErrorSeries>,
    pub fit: Option<ConvergenceFit>,
    pub final_epsilon: Option<f64>,
    /// Detector-plane pixel size (m).
    pub pitch: (f64, f64),
}

pub struct FilterStudy {
    pub halfwidths_omega0: Vec<f64>,
    pub gamma_b: Vec<Vec<f64>>,
    /// FWHM of each bucket kernel along x (m).
    pub fwhm: Vec<f64>,
    /// Per channel: oracle image for each half-width.
    pub images: Vec<(String, Vec<Vec<f64>>)>,
}

pub struct RunResult {
    pub config: ExperimentConfig,
    pub spec: LatticeSpec,
    pub x_coh: f64,
    pub bandwidth_pdc: f64,
    pub rho_sa: f64,
    pub channels: Vec<ChannelResult>,
    pub filter_study: Option<FilterStudy>,
}

impl RunResult {
    pub fn channel(&self, name: &str) -> Option<&ChannelResult> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.resolved.toml"), self.config.to_toml()?)?;
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut summary_channels = Vec::new();
        for ch in &self.channels {
            let (px, py) = ch.pitch;
            let grid = |m: &[f64]| GridImage::from_lattice(m, nx, ny, px, py);
            let oracle = grid(&ch.oracle);
            oracle.write(&dir.join(format!("{}_oracle.gimg", ch.name)))?;
            std::fs::write(dir.join(format!("{}_oracle.pgm", ch.name)), oracle.pgm_preview())?;
            if let Some(map) = &ch.map {
                grid(&map.raw).write(&dir.join(format!("{}.gimg", ch.name)))?;
                let scaled = grid(&map.scaled);
                scaled.write(&dir.join(format!("{}_scaled.gimg", ch.name)))?;
                std::fs::write(dir.join(format!("{}.pgm", ch.name)), scaled.pgm_preview())?;
                if ch.mode == Mode::FfSpatialAverage && self.spec.is_2d() {
                    let ift = ift_reconstruct(&map.raw, &self.spec);
                    GridImage::from_lattice(&ift, nx, ny, self.spec.dx, self.spec.dy)
                        .write(&dir.join(format!("{}_ift.gimg", ch.name)))?;
                }
                if !self.spec.is_2d() {
                    let om = ch.oracle.iter().cloned().fold(f64::MIN, f64::max);
                    let os: Vec<f64> = ch.oracle.iter().map(|v| v / om).collect();
                    let csv = profiles_csv("x_m", px, &["measured", "oracle"], &[&map.scaled, &os]);
                    std::fs::write(dir.join(format!("{}_profile.csv", ch.name)), csv)?;
                }
            }
            if !ch.series.entries.is_empty() {
                std::fs::write(dir.join(format!("{}_eps.csv", ch.name)), ch.series.to_csv())?;
            }
            summary_channels.push(json!({
                "name": ch.name,
                "mode": ch.mode,
                "shots": ch.map.as_ref().map(|m| m.shots),
                "final_epsilon": ch.final_epsilon,
                "fit": ch.fit.map(|f| json!({"d0": f.d0, "d1": f.d1, "residual": f.residual})),
                "pitch_m": [px, py],
            }));
        }
        let mut summary = json!({
            "preset": self.config.preset,
            "x_coh_m": self.x_coh,
            "bandwidth_pdc_per_m": self.bandwidth_pdc,
            "rho_sa": self.rho_sa,
            "channels": summary_channels,
        });
        if let Some(fs) = &self.filter_study {
            summary["filter_study"] = json!({
                "halfwidths_omega0": fs.halfwidths_omega0,
                "gamma_b_fwhm_m": fs.fwhm,
            });
            let names: Vec<String> = fs.halfwidths_omega0.iter().map(|w| format!("dw{w}")).collect();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            if !self.spec.is_2d() {
                let cols: Vec<&[f64]> = fs.gamma_b.iter().map(|v| &v[..]).collect();
                std::fs::write(dir.join("gamma_b.csv"), profiles_csv("x_m", self.spec.dx, &refs, &cols))?;
                for (name, imgs) in &fs.images {
                    let cols: Vec<&[f64]> = imgs.iter().map(|v| &v[..]).collect();
                    std::fs::write(
                        dir.join(format!("{name}_filters.csv")),
                        profiles_csv("x_m", self.spec.dx, &refs, &cols),
                    )?;
                }
            }
        }
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).unwrap())?;
        Ok(())
    }
}
