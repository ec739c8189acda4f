use std::fmt;
use std::path::{Path, PathBuf};

use eigenwave::channel::Preset;
use eigenwave::config::{sha256_hex, Overrides, SimConfig};
use eigenwave::hogmt::decompose;
use eigenwave::io::{self, Provenance};
use eigenwave::kernel::{kernel_to_ldr, Domain, KernelMatrix};
use eigenwave::sim::{self, frame_kernel, noise_power, Scheme};
use eigenwave::stats::{average_capacity, total_gain, ChannelStats};
use eigenwave::Error;
use serde_json::json;

use crate::{ChannelPreset, Command, DumpDomain, RunArgs};

pub enum CliError {
    /// Bad input detected before any work started.
    Usage(String),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn preset(p: ChannelPreset) -> Preset {
    match p {
        ChannelPreset::A => Preset::A,
        ChannelPreset::B => Preset::B,
        ChannelPreset::Lti => Preset::Lti,
    }
}

fn preset_label(p: ChannelPreset) -> &'static str {
    match p {
        ChannelPreset::A => "a",
        ChannelPreset::B => "b",
        ChannelPreset::Lti => "lti",
    }
}

fn check_input(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such file", path.display())))
    }
}

fn check_output(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(CliError::Usage(format!(
            "{}: directory does not exist",
            parent.display()
        )));
    }
    if path.is_dir() {
        return Err(CliError::Usage(format!("{}: is a directory", path.display())));
    }
    Ok(())
}

fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<SimConfig> {
    let text = match path {
        Some(p) => {
            check_input(p)?;
            std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => String::new(),
    };
    SimConfig::from_toml_str(&text, overrides).map_err(|e| match path {
        Some(p) => CliError::Usage(format!("{}: {e}", p.display())),
        None => usage(e),
    })
}

fn overrides(run: &RunArgs, channel: Option<ChannelPreset>) -> Result<Overrides> {
    let schemes = match &run.schemes {
        Some(v) => Some(
            v.iter()
                .map(|s| s.parse::<Scheme>())
                .collect::<eigenwave::Result<Vec<_>>>()
                .map_err(usage)?,
        ),
        None => None,
    };
    Ok(Overrides {
        preset: channel.map(preset),
        frames_per_point: run.frames,
        master_seed: run.seed,
        snr_db: run.snr_db.clone(),
        schemes,
    })
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    match flag {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => Ok(Some(n)),
        None => sim::env_threads().map_err(usage),
    }
}

fn sweep(cfg: &SimConfig, threads: Option<usize>) -> Result<sim::SimReport> {
    Ok(sim::with_threads(threads, || sim::run_sweep(cfg))??)
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Decompose { kernel, out, rank } => decompose_cmd(&kernel, &out, rank),
        Command::Simulate { run, out, json } => simulate_cmd(&run, &out, json),
        Command::Stats {
            kernel,
            config,
            channel,
            snr_db,
            out,
            dump_dir,
        } => stats_cmd(
            kernel.as_deref(),
            config.as_deref(),
            channel,
            snr_db,
            out.as_deref(),
            dump_dir.as_deref(),
        ),
        Command::Compare { run, channels, out } => compare_cmd(&run, &channels, &out),
        Command::ChannelDump {
            config,
            channel,
            frame,
            domain,
            out,
        } => channel_dump_cmd(config.as_deref(), channel, frame, domain, &out),
    }
}

fn decompose_cmd(kernel: &Path, out: &Path, rank: Option<usize>) -> Result<()> {
    check_input(kernel)?;
    check_output(out)?;
    let bytes = io::read_file(kernel)?;
    let (k, prov) = io::decode_kernel(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", kernel.display())))?;
    let limit = k.data().nrows().min(k.data().ncols());
    if let Some(r) = rank {
        if r > limit {
            return Err(CliError::Usage(format!(
                "--rank {r} exceeds min(D_out, D_in) = {limit}"
            )));
        }
    }
    let e = decompose(&k, rank)?;
    let mut hash_input = bytes.clone();
    hash_input.extend_from_slice(format!("rank={rank:?}").as_bytes());
    let prov = Provenance {
        config_hash: sha256_hex(&hash_input),
        master_seed: prov.and_then(|p| p.master_seed),
    };
    io::write_eigenwaves(out, &e, Some(&prov))?;
    println!(
        "{} eigenwaves, sigma_1 = {}, written to {}",
        e.len(),
        e.sigmas().first().copied().unwrap_or(0.0),
        out.display()
    );
    Ok(())
}

fn simulate_cmd(run: &RunArgs, out: &Path, json: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(run.config.as_deref(), &overrides(run, run.channel)?)?;
    let json = json.unwrap_or_else(|| out.with_extension("json"));
    check_output(out)?;
    check_output(&json)?;
    let report = sweep(&cfg, threads(run.threads)?)?;
    io::atomic_write(out, report.to_csv().as_bytes())?;
    io::atomic_write(&json, report.to_json().as_bytes())?;
    eprintln!(
        "{} rows written to {} (config_hash={})",
        report.rows.len(),
        out.display(),
        report.config_hash
    );
    Ok(())
}

fn stats_cmd(
    kernel: Option<&Path>,
    config: Option<&Path>,
    channel: Option<ChannelPreset>,
    snr_db: f64,
    out: Option<&Path>,
    dump_dir: Option<&Path>,
) -> Result<()> {
    if let Some(p) = out {
        check_output(p)?;
    }
    if let Some(d) = dump_dir {
        if !d.is_dir() {
            return Err(CliError::Usage(format!("{}: directory does not exist", d.display())));
        }
    }
    let (k, prov) = match kernel {
        Some(path) => {
            check_input(path)?;
            let bytes = io::read_file(path)?;
            let (k, prov) =
                io::decode_kernel(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let prov = prov.unwrap_or(Provenance {
                config_hash: sha256_hex(&bytes),
                master_seed: None,
            });
            (k, prov)
        }
        None => {
            let cfg = load_config(
                config,
                &Overrides {
                    preset: channel.map(preset),
                    ..Default::default()
                },
            )?;
            let ch = sim::sweep_channel(&cfg, 0, 0)?;
            let prov = Provenance {
                config_hash: cfg.config_hash(),
                master_seed: Some(cfg.master_seed),
            };
            (frame_kernel(&ch)?, prov)
        }
    };

    let e = decompose(&k, None)?;
    let (direct, eigen) = total_gain(&k, &e);
    let lambdas = e.lambdas();
    let d_in = k.data().ncols();
    let total_power = d_in as f64;
    let n0 = noise_power(1.0, snr_db);
    let frame_time = k.grid().frame_duration_s();
    let capacity = if n0 > 0.0 && direct > 0.0 {
        Some(average_capacity(&lambdas, n0, total_power, frame_time)?.0)
    } else {
        None
    };

    let mut doc = json!({
        "total_gain": eigen,
        "total_gain_direct": direct,
        "lambda_spectrum": lambdas,
        "capacity_bits_per_s": capacity,
        "snr_db": snr_db,
        "noise_power": n0,
        "total_power": total_power,
        "frame_duration_s": frame_time,
        "config_hash": prov.config_hash,
        "master_seed": prov.master_seed,
    });

    if let Some(dir) = dump_dir {
        let ldr_set = if k.domain() == Domain::TimeFrequency && k.grid().is_single_user() {
            decompose(&kernel_to_ldr(&k)?.scattering_kernel(), None)?
        } else if k.grid().is_single_user() {
            e.clone()
        } else {
            return Err(CliError::Runtime(Error::UnsupportedDomain(
                "array dumps need a single-user kernel".into(),
            )));
        };
        let s = ChannelStats::from_eigenwaves(&ldr_set)?;
        let mut files = Vec::new();
        for (name, shape, data) in [
            (
                "scattering",
                s.scattering.shape().to_vec(),
                s.scattering.iter().copied().collect::<Vec<_>>(),
            ),
            (
                "tf_path_gain",
                s.tf_path_gain.shape().to_vec(),
                s.tf_path_gain.iter().copied().collect(),
            ),
            ("ccf", s.ccf.shape().to_vec(), s.ccf.iter().copied().collect()),
            ("lsf", s.lsf.shape().to_vec(), s.lsf.iter().copied().collect()),
        ] {
            let path = dir.join(format!("{name}.eiga"));
            io::atomic_write(&path, &io::encode_array(&shape, &data, Some(&prov))?)?;
            files.push(path.display().to_string());
        }
        doc["dumps"] = json!(files);
        doc["mode"] = json!(s.mode);
    }

    let text = serde_json::to_string_pretty(&doc).expect("json serializes");
    match out {
        Some(p) => io::atomic_write(p, text.as_bytes())?,
        None => println!("{text}"),
    }
    Ok(())
}

fn compare_cmd(run: &RunArgs, channels: &[ChannelPreset], out: &Path) -> Result<()> {
    check_output(out)?;
    if run.channel.is_some() {
        return Err(CliError::Usage("compare takes --channels, not --channel".into()));
    }
    let threads = threads(run.threads)?;
    let base = load_config(run.config.as_deref(), &overrides(run, None)?)?;
    let mut body = String::from("channel,scheme,snr_db,metric,value\n");
    for &c in channels {
        let cfg = load_config(run.config.as_deref(), &overrides(run, Some(c))?)?;
        let report = sweep(&cfg, threads)?;
        for r in &report.rows {
            let label = preset_label(c);
            for (metric, value) in [
                ("ber", r.ber.to_string()),
                ("bler", r.bler.to_string()),
                ("goodput_bps", r.goodput_bps.to_string()),
                ("bit_errors", r.bit_errors.to_string()),
                ("bits_sent", r.bits_sent.to_string()),
            ] {
                body.push_str(&format!("{label},{},{},{metric},{value}\n", r.scheme, r.snr_db));
            }
        }
    }
    let text = format!(
        "# eigenwave config_hash={} master_seed={}\n{body}",
        base.config_hash(),
        base.master_seed
    );
    io::atomic_write(out, text.as_bytes())?;
    Ok(())
}

fn channel_dump_cmd(
    config: Option<&Path>,
    channel: Option<ChannelPreset>,
    frame: usize,
    domain: DumpDomain,
    out: &Path,
) -> Result<()> {
    check_output(out)?;
    let cfg = load_config(
        config,
        &Overrides {
            preset: channel.map(preset),
            ..Default::default()
        },
    )?;
    let ch = sim::sweep_channel(&cfg, 0, frame)?;
    let k = match domain {
        DumpDomain::Tf => frame_kernel(&ch)?,
        DumpDomain::Time => KernelMatrix::new(ch.matrix::<f64>(), sim::frame_grid(&cfg.channel), Domain::TimeDomain)?,
    };
    let prov = Provenance {
        config_hash: cfg.config_hash(),
        master_seed: Some(cfg.master_seed),
    };
    io::write_kernel(out, &k, Some(&prov))?;
    eprintln!(
        "{}x{} kernel written to {}",
        k.data().nrows(),
        k.data().ncols(),
        out.display()
    );
    Ok(())
}
