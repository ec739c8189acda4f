//! Simulation configuration files.
//!
//! Values are resolved in three layers: built-in defaults, then the TOML
//! file, then [`Overrides`] (command-line flags).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{kmh_to_mps, ChannelConfig, Convolution, DopplerEvolution, Preset, Profile};
use crate::error::{Error, Result};
use crate::modem::Constellation;
use crate::sim::Scheme;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    #[default]
    Equal,
    Waterfill,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModemConfig {
    pub constellation: Constellation,
    pub allocation: AllocationMode,
    /// Fraction of eigenwaves left empty by `zpmem`.
    pub zp_fraction: f64,
    /// Frame energy budget; `None` means one unit per grid sample.
    pub total_power: Option<f64>,
}

impl Default for ModemConfig {
    fn default() -> Self {
        Self {
            constellation: Constellation::Qpsk,
            allocation: AllocationMode::Equal,
            zp_fraction: 0.125,
            total_power: None,
        }
    }
}

impl ModemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.zp_fraction) {
            return Err(Error::Config(format!(
                "modem.zp_fraction = {} outside [0, 1)",
                self.zp_fraction
            )));
        }
        if let Some(p) = self.total_power {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("modem.total_power = {p} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub channel: ChannelConfig,
    pub modem: ModemConfig,
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub frames_per_point: usize,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::eva(16, 4),
            modem: ModemConfig::default(),
            schemes: Scheme::ALL.to_vec(),
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            frames_per_point: 100,
            master_seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.modem.validate()?;
        if self.schemes.is_empty() {
            return Err(Error::Config("sim.schemes is empty".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("sim.snr_db is empty".into()));
        }
        if let Some(s) = self.snr_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return Err(Error::Config(format!("sim.snr_db contains {s}")));
        }
        if self.frames_per_point == 0 {
            return Err(Error::Config("sim.frames_per_point must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses a TOML document and applies `overrides` on top.
    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.resolve(overrides)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Values taken from the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub frames_per_point: Option<usize>,
    pub master_seed: Option<u64>,
    pub snr_db: Option<Vec<f64>>,
    pub schemes: Option<Vec<Scheme>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    channel: ChannelSection,
    #[serde(default)]
    modem: ModemSection,
    #[serde(default)]
    sim: SimSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    profile: Option<String>,
    bandwidth_hz: Option<f64>,
    carrier_hz: Option<f64>,
    n_subcarriers: Option<usize>,
    n_symbols: Option<usize>,
    subcarrier_spacing_hz: Option<f64>,
    speed_kmh: Option<[f64; 2]>,
    stationarity_interval: Option<usize>,
    seed: Option<u64>,
    doppler_evolution: Option<DopplerEvolution>,
    convolution: Option<Convolution>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModemSection {
    constellation: Option<String>,
    allocation: Option<AllocationMode>,
    zp_fraction: Option<f64>,
    total_power: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    schemes: Option<Vec<String>>,
    snr_db: Option<Vec<f64>>,
    frames_per_point: Option<usize>,
    master_seed: Option<u64>,
}

impl ConfigFile {
    fn resolve(self, o: &Overrides) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        let c = self.channel;
        let ch = &mut cfg.channel;
        if let Some(p) = c.profile {
            ch.profile = p.parse::<Profile>()?;
        }
        if let Some(v) = c.subcarrier_spacing_hz {
            ch.subcarrier_spacing_hz = v;
        }
        if let Some(v) = c.n_subcarriers {
            ch.n_subcarriers = v;
        }
        if let Some(v) = c.n_symbols {
            ch.n_symbols = v;
        }
        ch.bandwidth_hz = c
            .bandwidth_hz
            .unwrap_or(ch.n_subcarriers as f64 * ch.subcarrier_spacing_hz);
        if let Some(v) = c.carrier_hz {
            ch.carrier_hz = v;
        }
        if let Some([lo, hi]) = c.speed_kmh {
            ch.speed_range_mps = (kmh_to_mps(lo), kmh_to_mps(hi));
        }
        // the default interval follows the grid (one symbol)
        ch.stationarity_interval_samples = c.stationarity_interval.unwrap_or(ch.n_subcarriers);
        if let Some(v) = c.seed {
            ch.seed = v;
        }
        if let Some(v) = c.doppler_evolution {
            ch.doppler_evolution = v;
        }
        if let Some(v) = c.convolution {
            ch.convolution = v;
        }

        if let Some(preset) = o.preset {
            if let Some(k) = c.stationarity_interval {
                let implied = ch.preset_interval(preset);
                if k != implied {
                    return Err(Error::Config(format!(
                        "--channel {} implies channel.stationarity_interval = {implied}, but the config sets channel.stationarity_interval = {k}",
                        preset_name(preset)
                    )));
                }
            }
            if preset == Preset::Lti {
                if let Some([lo, hi]) = c.speed_kmh {
                    if lo != 0.0 || hi != 0.0 {
                        return Err(Error::Config(format!(
                            "--channel lti implies a static channel, but the config sets channel.speed_kmh = [{lo}, {hi}]"
                        )));
                    }
                }
            }
            ch.apply_preset(preset);
        }

        let m = self.modem;
        if let Some(v) = m.constellation {
            cfg.modem.constellation = v.parse()?;
        }
        if let Some(v) = m.allocation {
            cfg.modem.allocation = v;
        }
        if let Some(v) = m.zp_fraction {
            cfg.modem.zp_fraction = v;
        }
        cfg.modem.total_power = m.total_power;

        let s = self.sim;
        if let Some(v) = s.schemes {
            cfg.schemes = v.iter().map(|x| x.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = s.snr_db {
            cfg.snr_db = v;
        }
        if let Some(v) = s.frames_per_point {
            cfg.frames_per_point = v;
        }
        if let Some(v) = s.master_seed {
            cfg.master_seed = v;
        }

        if let Some(v) = &o.schemes {
            cfg.schemes = v.clone();
        }
        if let Some(v) = &o.snr_db {
            cfg.snr_db = v.clone();
        }
        if let Some(v) = o.frames_per_point {
            cfg.frames_per_point = v;
        }
        if let Some(v) = o.master_seed {
            cfg.master_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn preset_name(p: Preset) -> &'static str {
    match p {
        Preset::A => "a",
        Preset::B => "b",
        Preset::Lti => "lti",
    }
}
