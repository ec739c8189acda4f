//! Discrete non-stationary multipath channels.
//!
//! A [`PathSet`] is drawn from a power-delay profile, then [`realize`] turns
//! it into per-sample taps `h[m, l]`. The Doppler of every path is held
//! constant inside a stationarity interval and re-drawn (or drifted) at each
//! interval boundary, with the carrier phase kept continuous.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{convert_complex, Real};

pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;

/// Extended Vehicular A profile: (delay ns, relative power dB).
pub const EVA_PROFILE: [(f64, f64); 9] = [
    (0.0, 0.0),
    (30.0, -1.5),
    (150.0, -1.4),
    (310.0, -3.6),
    (370.0, -0.6),
    (710.0, -9.1),
    (1090.0, -7.0),
    (1730.0, -12.0),
    (2510.0, -16.9),
];

/// Two-path profile: a direct path and one echo 3 dB down at 1 µs.
pub const TWO_PATH_PROFILE: [(f64, f64); 2] = [(0.0, 0.0), (1000.0, -3.0)];

/// Maximum Doppler shift `f_c v / c`.
pub fn max_doppler_hz(carrier_hz: f64, speed_mps: f64) -> f64 {
    carrier_hz * speed_mps / SPEED_OF_LIGHT_MPS
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex<f64>,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub doppler_drift_hz_per_s: f64,
}

/// Propagation paths of one frame plus the kinematics they were drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    paths: Vec<Path>,
    carrier_hz: f64,
    speed_mps: f64,
}

impl PathSet {
    pub fn new(paths: Vec<Path>, carrier_hz: f64, speed_mps: f64) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Config("path set must contain at least one path".into()));
        }
        if paths.iter().all(|p| p.gain.norm_sqr() == 0.0) {
            return Err(Error::Config("path gains are all zero".into()));
        }
        if !(carrier_hz > 0.0) || !(speed_mps >= 0.0) {
            return Err(Error::Config(format!(
                "carrier {carrier_hz} Hz and speed {speed_mps} m/s must be positive"
            )));
        }
        let nu_max = max_doppler_hz(carrier_hz, speed_mps);
        for (i, p) in paths.iter().enumerate() {
            if !(p.delay_s >= 0.0) || !p.delay_s.is_finite() {
                return Err(Error::Config(format!("path {i}: delay {} s is negative", p.delay_s)));
            }
            if p.doppler_hz.abs() > nu_max * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "path {i}: |doppler| {} Hz exceeds f_c v / c = {nu_max} Hz",
                    p.doppler_hz
                )));
            }
        }
        Ok(Self {
            paths,
            carrier_hz,
            speed_mps,
        })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_mps
    }

    pub fn max_doppler_hz(&self) -> f64 {
        max_doppler_hz(self.carrier_hz, self.speed_mps)
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Eva,
    SinglePath,
    TwoPath,
    Custom(PathSet),
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "eva" => Ok(Profile::Eva),
            "single_path" | "single" => Ok(Profile::SinglePath),
            "two_path" => Ok(Profile::TwoPath),
            other => Err(Error::Config(format!("unknown channel profile `{other}`"))),
        }
    }
}

/// How a path's Doppler evolves across stationarity-interval boundaries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerEvolution {
    /// Re-draw `ν = ν_max cos θ` with fresh `θ` at every boundary.
    #[default]
    Redraw,
    /// Keep the initial Doppler and add `drift · t_boundary`.
    Drift,
}

/// Time-domain propagation model used when building the channel matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convolution {
    #[default]
    Linear,
    /// Per-symbol circular convolution, i.e. an ideal cyclic prefix. Only
    /// meaningful for LTI sanity checks.
    CyclicPerSymbol,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub profile: Profile,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    pub speed_range_mps: (f64, f64),
    pub stationarity_interval_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub doppler_evolution: DopplerEvolution,
    #[serde(default)]
    pub convolution: Convolution,
}

/// Named stationarity presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Doppler re-drawn once per symbol.
    A,
    /// Doppler re-drawn every sample.
    B,
    /// Static channel with a single interval over the frame.
    Lti,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Preset::A),
            "b" => Ok(Preset::B),
            "lti" => Ok(Preset::Lti),
            other => Err(Error::Config(format!("unknown channel preset `{other}`"))),
        }
    }
}

impl ChannelConfig {
    /// EVA channel at 5 GHz, 15 kHz spacing, 100-150 km/h on the given grid,
    /// with the Channel-A (one symbol) stationarity interval.
    pub fn eva(n_subcarriers: usize, n_symbols: usize) -> Self {
        let spacing = 15_000.0;
        Self {
            profile: Profile::Eva,
            bandwidth_hz: n_subcarriers as f64 * spacing,
            carrier_hz: 5.0e9,
            n_subcarriers,
            n_symbols,
            subcarrier_spacing_hz: spacing,
            speed_range_mps: (kmh_to_mps(100.0), kmh_to_mps(150.0)),
            stationarity_interval_samples: n_subcarriers,
            seed: 0,
            doppler_evolution: DopplerEvolution::Redraw,
            convolution: Convolution::Linear,
        }
    }

    /// 64 subcarriers by 10 symbols, 960 kHz bandwidth.
    pub fn reference() -> Self {
        Self::eva(64, 10)
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.apply_preset(preset);
        self
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::A => self.stationarity_interval_samples = self.n_subcarriers,
            Preset::B => self.stationarity_interval_samples = 1,
            Preset::Lti => {
                self.stationarity_interval_samples = self.frame_samples();
                self.speed_range_mps = (0.0, 0.0);
            }
        }
    }

    pub fn preset_interval(&self, preset: Preset) -> usize {
        match preset {
            Preset::A => self.n_subcarriers,
            Preset::B => 1,
            Preset::Lti => self.frame_samples(),
        }
    }

    pub fn frame_samples(&self) -> usize {
        self.n_subcarriers * self.n_symbols
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.n_symbols as f64 / self.subcarrier_spacing_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 || self.n_symbols == 0 {
            return Err(Error::Config(
                "grid must have at least one subcarrier and symbol".into(),
            ));
        }
        if !(self.subcarrier_spacing_hz > 0.0) || !(self.carrier_hz > 0.0) {
            return Err(Error::Config("carrier and subcarrier spacing must be positive".into()));
        }
        let expected = self.n_subcarriers as f64 * self.subcarrier_spacing_hz;
        if (self.bandwidth_hz - expected).abs() > 1e-9 * expected {
            return Err(Error::Config(format!(
                "channel.bandwidth_hz = {} but n_subcarriers * subcarrier_spacing_hz = {expected}",
                self.bandwidth_hz
            )));
        }
        let n = self.frame_samples();
        if self.stationarity_interval_samples == 0 || self.stationarity_interval_samples > n {
            return Err(Error::Config(format!(
                "channel.stationarity_interval = {} outside [1, {n}]",
                self.stationarity_interval_samples
            )));
        }
        let (lo, hi) = self.speed_range_mps;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("invalid speed range [{lo}, {hi}] m/s")));
        }
        Ok(())
    }
}

/// Per-sample taps of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    taps: Array2<Complex<f64>>,
    sample_rate_hz: f64,
    config: ChannelConfig,
}

fn draw_profile<R: Rng + ?Sized>(
    profile: &[(f64, f64)],
    carrier_hz: f64,
    speed_mps: f64,
    rng: &mut R,
) -> Result<PathSet> {
    let total: f64 = profile.iter().map(|&(_, db)| 10f64.powf(db / 10.0)).sum();
    let nu_max = max_doppler_hz(carrier_hz, speed_mps);
    let paths = profile
        .iter()
        .map(|&(delay_ns, db)| {
            let amp = (10f64.powf(db / 10.0) / total).sqrt();
            let phase = rng.random_range(0.0..2.0 * PI);
            let theta = rng.random_range(0.0..2.0 * PI);
            Path {
                gain: Complex::from_polar(amp, phase),
                delay_s: delay_ns * 1e-9,
                doppler_hz: nu_max * theta.cos(),
                doppler_drift_hz_per_s: 0.0,
            }
        })
        .collect();
    PathSet::new(paths, carrier_hz, speed_mps)
}

fn draw_speed<R: Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> f64 {
    let (lo, hi) = range;
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Draws the paths of one frame.
///
/// Built-in profiles are normalized to unit total power and get a uniform
/// random phase per path. `SinglePath` keeps gain `1 + 0j`. Custom path sets
/// are returned unchanged.
pub fn draw_paths<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Result<PathSet> {
    cfg.validate()?;
    let speed = draw_speed(cfg.speed_range_mps, rng);
    match &cfg.profile {
        Profile::Eva => draw_profile(&EVA_PROFILE, cfg.carrier_hz, speed, rng),
        Profile::TwoPath => draw_profile(&TWO_PATH_PROFILE, cfg.carrier_hz, speed, rng),
        Profile::SinglePath => {
            let theta = rng.random_range(0.0..2.0 * PI);
            PathSet::new(
                vec![Path {
                    gain: Complex::new(1.0, 0.0),
                    delay_s: 0.0,
                    doppler_hz: max_doppler_hz(cfg.carrier_hz, speed) * theta.cos(),
                    doppler_drift_hz_per_s: 0.0,
                }],
                cfg.carrier_hz,
                speed,
            )
        }
        Profile::Custom(paths) => Ok(paths.clone()),
    }
}

/// Expands a path set into per-sample taps.
pub fn realize<R: Rng + ?Sized>(paths: &PathSet, cfg: &ChannelConfig, rng: &mut R) -> Result<ChannelRealization> {
    cfg.validate()?;
    let n = cfg.frame_samples();
    let fs = cfg.sample_rate_hz();
    let ts = 1.0 / fs;
    let frame = cfg.frame_duration_s();

    let mut tap_index = Vec::with_capacity(paths.paths.len());
    for (i, p) in paths.paths.iter().enumerate() {
        if p.delay_s >= frame {
            return Err(Error::Config(format!(
                "path {i}: delay {} s not shorter than the frame ({frame} s)",
                p.delay_s
            )));
        }
        let l = (p.delay_s * fs).round() as usize;
        if l >= n {
            return Err(Error::Config(format!(
                "path {i}: tap index {l} not below frame length {n}"
            )));
        }
        tap_index.push(l);
    }
    let n_taps = tap_index.iter().max().copied().unwrap_or(0) + 1;
    let nu_max = paths.max_doppler_hz();
    let interval = cfg.stationarity_interval_samples;

    let mut taps = Array2::<Complex<f64>>::zeros((n, n_taps));
    let mut phase = vec![0.0f64; paths.paths.len()];
    let mut base = paths.paths.iter().map(|p| p.doppler_hz).collect::<Vec<_>>();
    let mut doppler = base.clone();

    for m in 0..n {
        if m > 0 && m % interval == 0 {
            let t_start = m as f64 * ts;
            for (p, path) in paths.paths.iter().enumerate() {
                if cfg.doppler_evolution == DopplerEvolution::Redraw {
                    let theta = rng.random_range(0.0..2.0 * PI);
                    base[p] = nu_max * theta.cos();
                }
                doppler[p] = base[p] + path.doppler_drift_hz_per_s * t_start;
            }
        }
        for (p, path) in paths.paths.iter().enumerate() {
            taps[[m, tap_index[p]]] += path.gain * Complex::from_polar(1.0, phase[p]);
            phase[p] = (phase[p] + 2.0 * PI * doppler[p] * ts).rem_euclid(2.0 * PI);
        }
    }

    Ok(ChannelRealization {
        taps,
        sample_rate_hz: fs,
        config: cfg.clone(),
    })
}

/// Convenience: draw paths and realize them from one stream.
pub fn generate<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Result<ChannelRealization> {
    let paths = draw_paths(cfg, rng)?;
    realize(&paths, cfg, rng)
}

impl ChannelRealization {
    /// Wraps externally produced taps; `taps` must have one row per frame sample.
    pub fn from_taps(taps: Array2<Complex<f64>>, cfg: &ChannelConfig) -> Result<Self> {
        cfg.validate()?;
        crate::error::check_dim("channel tap rows", cfg.frame_samples(), taps.nrows())?;
        if taps.ncols() == 0 || taps.ncols() > cfg.frame_samples() {
            return Err(Error::Config(format!("tap count {} out of range", taps.ncols())));
        }
        Ok(Self {
            taps,
            sample_rate_hz: cfg.sample_rate_hz(),
            config: cfg.clone(),
        })
    }

    pub fn taps(&self) -> &Array2<Complex<f64>> {
        &self.taps
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn n_samples(&self) -> usize {
        self.taps.nrows()
    }

    pub fn n_taps(&self) -> usize {
        self.taps.ncols()
    }

    /// `Σ_{m,l} |h[m,l]|²`.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Banded lower-triangular matrix of the linear time-varying convolution,
    /// `H[m, m'] = h[m, m - m']`.
    pub fn time_domain_matrix<T: Real>(&self) -> DMatrix<Complex<T>> {
        let n = self.n_samples();
        let mut h = DMatrix::zeros(n, n);
        for m in 0..n {
            for l in 0..self.n_taps().min(m + 1) {
                h[(m, m - l)] = convert_complex(self.taps[[m, l]]);
            }
        }
        h
    }

    /// Block-diagonal matrix of per-symbol circular convolutions. Taps beyond
    /// one symbol wrap around within the symbol.
    pub fn time_domain_matrix_cyclic<T: Real>(&self) -> DMatrix<Complex<T>> {
        let n = self.n_samples();
        let f = self.config.n_subcarriers;
        let mut h = DMatrix::<Complex<T>>::zeros(n, n);
        for m in 0..n {
            let block = m / f * f;
            let i = m - block;
            for l in 0..self.n_taps() {
                let j = (i + f - l % f) % f;
                h[(m, block + j)] += convert_complex(self.taps[[m, l]]);
            }
        }
        h
    }

    /// Channel matrix according to the configured convolution model.
    pub fn matrix<T: Real>(&self) -> DMatrix<Complex<T>> {
        match self.config.convolution {
            Convolution::Linear => self.time_domain_matrix(),
            Convolution::CyclicPerSymbol => self.time_domain_matrix_cyclic(),
        }
    }
}
