//! Monte Carlo link simulation: per-frame pipelines and seeded SNR sweeps.
//!
//! SNR is `Es/N0` with `Es` the mean transmitted energy per complex time
//! sample, so every scheme radiates the same frame energy.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelConfig, ChannelRealization};
use crate::config::{AllocationMode, ModemConfig, SimConfig};
use crate::error::{Error, Result};
use crate::hogmt::decompose;
use crate::kernel::{ofdm_analyze, ofdm_synthesize, tf_kernel_from_time, FrameGrid, KernelMatrix};
use crate::modem::{mem_demodulate, mem_modulate, waterfill, zp_select, ConstellationMap, PowerAllocation};
use crate::otfs::{otfs_demodulate_tfst, otfs_modulate, single_tap_equalize, DelayDopplerGrid};
use crate::random::{complex_normal, substream};
use crate::scalar::Real;

type C = Complex<f64>;

/// Eigenwaves with `σ_n ≤ SIGMA_FLOOR · σ_1` carry no data.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "mem")]
    Mem,
    #[serde(rename = "zpmem")]
    ZpMem,
    #[serde(rename = "otfs-tfst")]
    OtfsTfst,
    #[serde(rename = "ofdm-singletap")]
    OfdmSingleTap,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Mem, Scheme::ZpMem, Scheme::OtfsTfst, Scheme::OfdmSingleTap];

    pub fn id(self) -> &'static str {
        match self {
            Scheme::Mem => "mem",
            Scheme::ZpMem => "zpmem",
            Scheme::OtfsTfst => "otfs-tfst",
            Scheme::OfdmSingleTap => "ofdm-singletap",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|x| x.id() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown scheme `{s}` (expected mem, zpmem, otfs-tfst, ofdm-singletap)"
            ))
        })
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Adds circularly-symmetric Gaussian noise of variance `n0` per sample.
pub fn awgn<T: Real, R: Rng + ?Sized>(signal: &DVector<Complex<T>>, n0: f64, rng: &mut R) -> DVector<Complex<T>> {
    if n0 == 0.0 {
        return signal.clone();
    }
    signal.map(|z| z + complex_normal::<T, R>(rng, n0))
}

/// `N0 = Es / 10^(snr/10)`; infinite SNR is noiseless.
pub fn noise_power(es: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        es / 10f64.powf(snr_db / 10.0)
    }
}

pub fn frame_grid(cfg: &ChannelConfig) -> FrameGrid {
    FrameGrid {
        n_users_rx: 1,
        n_users_tx: 1,
        n_symbols: cfg.n_symbols,
        n_subcarriers: cfg.n_subcarriers,
        subcarrier_spacing_hz: cfg.subcarrier_spacing_hz,
    }
}

/// Eigenwave-level detail of a MEM frame.
#[derive(Clone, Debug)]
pub struct EigenTrace {
    pub lambdas: Vec<f64>,
    pub powers: Vec<f64>,
    /// Eigenwave index of each entry of `raw`.
    pub indices: Vec<usize>,
    /// Matched-filter outputs `ψ_nᴴ r`.
    pub raw: Vec<C>,
}

/// Everything one frame produced.
#[derive(Clone, Debug)]
pub struct FrameTrace {
    pub bits: Vec<u8>,
    pub decoded: Vec<u8>,
    pub symbols: Vec<C>,
    pub equalized: Vec<C>,
    pub tx_energy: f64,
    pub noise_power: f64,
    pub eigen: Option<EigenTrace>,
}

impl FrameTrace {
    pub fn bit_errors(&self) -> u64 {
        self.bits.iter().zip(&self.decoded).filter(|(a, b)| a != b).count() as u64
    }

    /// Mean `|equalized − sent|²` per data symbol.
    pub fn residual_power(&self) -> f64 {
        if self.symbols.is_empty() {
            return 0.0;
        }
        self.symbols
            .iter()
            .zip(&self.equalized)
            .map(|(s, e)| (e - s).norm_sqr())
            .sum::<f64>()
            / self.symbols.len() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameOutcome {
    pub bits_sent: u64,
    pub bit_errors: u64,
}

fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

fn mem_allocation(
    sigmas: &[f64],
    mask: &[bool],
    modem: &ModemConfig,
    total_power: f64,
    n0: f64,
) -> Result<PowerAllocation<f64>> {
    let lambdas: Vec<f64> = sigmas
        .iter()
        .zip(mask)
        .map(|(s, &a)| if a { s * s } else { 0.0 })
        .collect();
    match modem.allocation {
        AllocationMode::Waterfill if n0 > 0.0 => waterfill(&lambdas, n0, total_power),
        _ => PowerAllocation::equal(mask, total_power, n0),
    }
}

/// Runs one frame of `scheme` through `channel` and returns the full trace.
pub fn trace_frame<R: Rng + ?Sized>(
    scheme: Scheme,
    channel: &ChannelRealization,
    modem: &ModemConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<FrameTrace> {
    let grid = frame_grid(channel.config());
    let d = grid.per_user();
    let total_power = modem.total_power.unwrap_or(d as f64);
    let n0 = noise_power(total_power / d as f64, snr_db);
    let h = channel.matrix::<f64>();
    let k = tf_kernel_from_time(&h, &grid)?;
    let cmap = ConstellationMap::<f64>::new(modem.constellation);
    let bps = cmap.bits_per_symbol();

    let propagate = |x_tf: &DVector<C>, rng: &mut R| -> Result<(DVector<C>, f64)> {
        let x = ofdm_synthesize(&grid, x_tf)?;
        let energy = x.norm_squared();
        Ok((awgn(&(&h * x), n0, rng), energy))
    };

    match scheme {
        Scheme::Mem | Scheme::ZpMem => {
            let e = decompose(&k, None)?;
            let sigma_max = e.sigmas().first().copied().unwrap_or(0.0);
            let fraction = if scheme == Scheme::ZpMem {
                modem.zp_fraction
            } else {
                0.0
            };
            let zp = zp_select(&e, fraction)?;
            let mask: Vec<bool> = e
                .sigmas()
                .iter()
                .zip(&zp)
                .map(|(s, &keep)| keep && *s > SIGMA_FLOOR * sigma_max)
                .collect();
            let alloc = mem_allocation(e.sigmas(), &mask, modem, total_power, n0)?;
            let bits = random_bits(rng, alloc.active_count() * bps);
            let symbols = cmap.map_bits(&bits)?;
            let frame = mem_modulate(&e, &symbols, &alloc)?;
            let (r, tx_energy) = propagate(&frame.tx_signal, rng)?;
            let est = mem_demodulate(&e, &ofdm_analyze(&grid, &r)?, &alloc)?;
            let decoded = cmap.demap(&est.equalized);
            Ok(FrameTrace {
                bits,
                decoded,
                symbols,
                equalized: est.equalized,
                tx_energy,
                noise_power: n0,
                eigen: Some(EigenTrace {
                    lambdas: e.lambdas(),
                    powers: alloc.powers().to_vec(),
                    indices: est.indices,
                    raw: est.raw,
                }),
            })
        }
        Scheme::OfdmSingleTap => {
            let bits = random_bits(rng, d * bps);
            let symbols = cmap.map_bits(&bits)?;
            let scale = (total_power / d as f64).sqrt();
            let x_tf = DVector::from_iterator(d, symbols.iter().map(|s| s * scale));
            let (r, tx_energy) = propagate(&x_tf, rng)?;
            let eq = single_tap_equalize(&ofdm_analyze(&grid, &r)?, &k)?;
            let equalized: Vec<C> = eq.iter().map(|z| z / scale).collect();
            let decoded = cmap.demap(&equalized);
            Ok(FrameTrace {
                bits,
                decoded,
                symbols,
                equalized,
                tx_energy,
                noise_power: n0,
                eigen: None,
            })
        }
        Scheme::OtfsTfst => {
            let bits = random_bits(rng, d * bps);
            let symbols = cmap.map_bits(&bits)?;
            let scale = (total_power / d as f64).sqrt();
            let scaled: Vec<C> = symbols.iter().map(|s| s * scale).collect();
            let dd = DelayDopplerGrid::from_symbols(&grid, &scaled)?;
            let x = otfs_modulate(&dd, &grid)?;
            let tx_energy = x.norm_squared();
            let r = awgn(&(&h * x), n0, rng);
            let out = otfs_demodulate_tfst(&r, &k, &grid)?;
            let equalized: Vec<C> = out.to_symbols().into_iter().map(|z| z / scale).collect();
            let decoded = cmap.demap(&equalized);
            Ok(FrameTrace {
                bits,
                decoded,
                symbols,
                equalized,
                tx_energy,
                noise_power: n0,
                eigen: None,
            })
        }
    }
}

/// Bits sent and bit errors of one frame.
pub fn run_frame<R: Rng + ?Sized>(
    scheme: Scheme,
    channel: &ChannelRealization,
    modem: &ModemConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<FrameOutcome> {
    let t = trace_frame(scheme, channel, modem, snr_db, rng)?;
    Ok(FrameOutcome {
        bits_sent: t.bits.len() as u64,
        bit_errors: t.bit_errors(),
    })
}

const CHANNEL_STREAM: u64 = u64::MAX;

/// Channel realization of frame `frame` at SNR index `snr` (shared by all schemes).
pub fn sweep_channel(cfg: &SimConfig, snr: usize, frame: usize) -> Result<ChannelRealization> {
    let mut rng = substream(
        cfg.master_seed,
        &[CHANNEL_STREAM, cfg.channel.seed, snr as u64, frame as u64],
    );
    channel::generate(&cfg.channel, &mut rng)
}

/// Bits, symbols and noise of trial `(scheme, snr, frame)`.
pub fn trial_stream(cfg: &SimConfig, scheme: usize, snr: usize, frame: usize) -> crate::random::Stream {
    substream(cfg.master_seed, &[scheme as u64, snr as u64, frame as u64])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub bler: f64,
    pub frames: u64,
    pub frame_errors: u64,
    pub goodput_bps: f64,
    pub seed: u64,
}

impl ReportRow {
    /// 95% Wilson interval for the BER.
    pub fn ber_interval(&self) -> (f64, f64) {
        wilson_interval(self.bit_errors, self.bits_sent, 1.959_963_984_540_054)
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config_hash: String,
    pub master_seed: u64,
    pub snr_definition: String,
    pub config: SimConfig,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "scheme,snr_db,bits_sent,bit_errors,ber,bler,frames,goodput_bps,seed";

impl SimReport {
    pub fn row(&self, scheme: Scheme, snr_db: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.snr_db == snr_db)
    }

    pub fn provenance_line(&self) -> String {
        format!(
            "# eigenwave config_hash={} master_seed={} snr={}",
            self.config_hash, self.master_seed, self.snr_definition
        )
    }

    /// CSV body without the provenance comment.
    pub fn csv_body(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.scheme, r.snr_db, r.bits_sent, r.bit_errors, r.ber, r.bler, r.frames, r.goodput_bps, r.seed
            )
            .expect("write to string");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", self.provenance_line(), self.csv_body())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Thread count from `EIGENWAVE_THREADS`, if set.
pub fn env_threads() -> Result<Option<usize>> {
    match std::env::var("EIGENWAVE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("EIGENWAVE_THREADS = `{v}` is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a pool of `threads` workers (rayon's default when `None`).
pub fn with_threads<F, R>(threads: Option<usize>, f: F) -> Result<R>
where
    F: FnOnce() -> R + Send,
    R: Send,
{
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Full sweep on the current rayon pool.
pub fn run_sweep(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let frames = cfg.frames_per_point;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.schemes.len())
        .flat_map(|s| (0..cfg.snr_db.len()).flat_map(move |q| (0..frames).map(move |f| (s, q, f))))
        .collect();
    let outcomes: Vec<FrameOutcome> = jobs
        .par_iter()
        .map(|&(s, q, f)| {
            let ch = sweep_channel(cfg, q, f)?;
            let mut rng = trial_stream(cfg, s, q, f);
            run_frame(cfg.schemes[s], &ch, &cfg.modem, cfg.snr_db[q], &mut rng)
        })
        .collect::<Result<_>>()?;

    let frame_time = cfg.channel.frame_duration_s();
    let mut rows = Vec::new();
    for (s, &scheme) in cfg.schemes.iter().enumerate() {
        for (q, &snr) in cfg.snr_db.iter().enumerate() {
            let start = (s * cfg.snr_db.len() + q) * frames;
            let chunk = &outcomes[start..start + frames];
            let bits_sent: u64 = chunk.iter().map(|o| o.bits_sent).sum();
            let bit_errors: u64 = chunk.iter().map(|o| o.bit_errors).sum();
            let frame_errors = chunk.iter().filter(|o| o.bit_errors > 0).count() as u64;
            rows.push(ReportRow {
                scheme,
                snr_db: snr,
                bits_sent,
                bit_errors,
                ber: if bits_sent == 0 {
                    0.0
                } else {
                    bit_errors as f64 / bits_sent as f64
                },
                bler: frame_errors as f64 / frames as f64,
                frames: frames as u64,
                frame_errors,
                goodput_bps: (bits_sent - bit_errors) as f64 / (frames as f64 * frame_time),
                seed: cfg.master_seed,
            });
        }
    }
    Ok(SimReport {
        config_hash: cfg.config_hash(),
        master_seed: cfg.master_seed,
        snr_definition: "Es/N0 per transmitted time sample".into(),
        config: cfg.clone(),
        rows,
    })
}

/// Per-eigenwave check of `E|ŝ_n|² = λ_n P_n + N0` over seeded frames.
#[derive(Clone, Debug)]
pub struct PowerRelation {
    pub noise_power: f64,
    /// Frames in which eigenwave `n` carried data.
    pub counts: Vec<u64>,
    /// Mean `|ŝ_n|²`.
    pub observed: Vec<f64>,
    /// Mean `λ_n P_n + N0`.
    pub expected: Vec<f64>,
    /// Standard error of the mean of `|ŝ_n|² − λ_n P_n − N0`.
    pub std_err: Vec<f64>,
    /// Mean of `Σ_n |ŝ_n|²` and of `Σ_n λ_n P_n + N0` per frame.
    pub summed_observed: f64,
    pub summed_expected: f64,
}

impl PowerRelation {
    /// Largest `|observed − expected| / std_err` over tracked eigenwaves.
    pub fn worst_z(&self) -> f64 {
        (0..self.observed.len())
            .filter(|&n| self.counts[n] > 1)
            .map(|n| (self.observed[n] - self.expected[n]).abs() / self.std_err[n].max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

pub fn power_relation(cfg: &SimConfig, snr_db: f64, frames: usize) -> Result<PowerRelation> {
    cfg.validate()?;
    let traces: Vec<EigenTrace> = (0..frames)
        .into_par_iter()
        .map(|f| {
            let ch = sweep_channel(cfg, 0, f)?;
            let mut rng = trial_stream(cfg, 0, 0, f);
            let t = trace_frame(Scheme::Mem, &ch, &cfg.modem, snr_db, &mut rng)?;
            Ok(t.eigen.expect("MEM frames carry an eigen trace"))
        })
        .collect::<Result<_>>()?;
    let d = cfg.channel.frame_samples();
    let total_power = cfg.modem.total_power.unwrap_or(d as f64);
    let n0 = noise_power(total_power / d as f64, snr_db);

    let mut counts = vec![0u64; d];
    let mut sum_obs = vec![0.0; d];
    let mut sum_exp = vec![0.0; d];
    let mut sum_dev = vec![0.0; d];
    let mut sum_dev2 = vec![0.0; d];
    let (mut tot_obs, mut tot_exp) = (0.0, 0.0);
    for t in &traces {
        for (&n, z) in t.indices.iter().zip(&t.raw) {
            let obs = z.norm_sqr();
            let exp = t.lambdas[n] * t.powers[n] + n0;
            let dev = obs - exp;
            counts[n] += 1;
            sum_obs[n] += obs;
            sum_exp[n] += exp;
            sum_dev[n] += dev;
            sum_dev2[n] += dev * dev;
            tot_obs += obs;
            tot_exp += exp;
        }
    }
    let mut observed = vec![0.0; d];
    let mut expected = vec![0.0; d];
    let mut std_err = vec![0.0; d];
    for n in 0..d {
        let c = counts[n] as f64;
        if counts[n] == 0 {
            continue;
        }
        observed[n] = sum_obs[n] / c;
        expected[n] = sum_exp[n] / c;
        if counts[n] > 1 {
            let mean = sum_dev[n] / c;
            let var = (sum_dev2[n] - c * mean * mean) / (c - 1.0);
            std_err[n] = (var.max(0.0) / c).sqrt();
        }
    }
    Ok(PowerRelation {
        noise_power: n0,
        counts,
        observed,
        expected,
        std_err,
        summed_observed: tot_obs / frames as f64,
        summed_expected: tot_exp / frames as f64,
    })
}

/// Noise-free residual `mean |equalized − sent|²` of one frame.
pub fn noiseless_residual(scheme: Scheme, channel: &ChannelRealization, modem: &ModemConfig, seed: u64) -> Result<f64> {
    let mut rng = substream(seed, &[0]);
    Ok(trace_frame(scheme, channel, modem, f64::INFINITY, &mut rng)?.residual_power())
}

/// The exact TF kernel of a realization.
pub fn frame_kernel(channel: &ChannelRealization) -> Result<KernelMatrix<f64>> {
    tf_kernel_from_time(&channel.matrix::<f64>(), &frame_grid(channel.config()))
}
