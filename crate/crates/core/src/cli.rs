//! Command-line front end. Flags take precedence over `EMGWIRE_*`
//! environment variables, which take precedence over defaults.

use std::ffi::OsString;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    self, spectrum, synthetic_reference, validate_replay, validate_sine, SineValidation,
    SpectrumConfig, ValidationReport, Window,
};
use crate::codec::{throughput, uart_frame_bits, CHANNELS};
use crate::device::source::ReplayData;
use crate::device::{run_device_with_mode, ClockMode, Device, DeviceConfig, DeviceReport, SourceSpec};
use crate::error::{Error, Result};
use crate::host::bridge::{Bridge, BridgeConfig};
use crate::host::{read_csv, run_session, SessionConfig, SessionControl, SessionOutcome};
use crate::pipeline::run_loopback;
use crate::signal_chain::NotchSpec;
use crate::transport::{connect_tcp, TransportSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "emgwire", version, about = "Eight-channel sEMG link simulator and host")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulated acquisition board and stream frames.
    Device(DeviceArgs),
    /// Receive a frame stream, decode, record, and optionally serve the panel bridge.
    Host(HostArgs),
    /// Full-scale sine through the chain with the analog filter bypassed.
    ValidateSine(SineArgs),
    /// Replay a recording through the chain with the analog filter on.
    ValidateReplay(ReplayArgs),
    /// Power spectrum of a recording CSV.
    Spectrum(SpectrumArgs),
    /// Frames per second a link can carry.
    Throughput(ThroughputArgs),
}

#[derive(Debug, Args)]
pub struct LinkArgs {
    #[arg(long, env = "EMGWIRE_BAUD", default_value_t = 115_200.0)]
    pub baud: f64,
    /// Bits per frame on the wire, UART framing included.
    #[arg(long, env = "EMGWIRE_FRAME_BITS", default_value_t = 110)]
    pub frame_bits: u32,
}

#[derive(Debug, Args)]
pub struct DeviceArgs {
    /// sine:F,A[;F,A...] | replay:PATH | gesture | gesture:SCRIPT.json (A in volts)
    #[arg(long, env = "EMGWIRE_SOURCE", default_value = "gesture")]
    pub source: String,
    /// loopback | tcp:HOST:PORT | stdout
    #[arg(long, env = "EMGWIRE_TRANSPORT", default_value = "stdout")]
    pub transport: String,
    #[command(flatten)]
    pub link: LinkArgs,
    /// Stop after this many seconds of samples; a loopback session defaults to 6.
    #[arg(long, env = "EMGWIRE_DURATION_S")]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub bypass_filter: bool,
    /// Mains pickup amplitude in mV.
    #[arg(long, env = "EMGWIRE_MAINS_MV", default_value_t = 0.0)]
    pub mains_mv: f64,
    #[arg(long, default_value_t = 60.0)]
    pub mains_freq: f64,
    /// Gain applied to replay sources.
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    #[arg(long, env = "EMGWIRE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Run as fast as the consumer allows instead of in real time.
    #[arg(long, env = "EMGWIRE_VIRTUAL_CLOCK")]
    pub virtual_clock: bool,
    /// Loopback only: recording path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Loopback only: enable the 60 Hz notch on the live path.
    #[arg(long)]
    pub notch: bool,
}

#[derive(Debug, Args)]
pub struct HostArgs {
    /// Accept the device stream on this address; stdin is read otherwise.
    #[arg(long, env = "EMGWIRE_LISTEN")]
    pub listen: Option<String>,
    /// Serve the panel bridge (WebSocket) on this address and run until killed.
    #[arg(long, env = "EMGWIRE_BRIDGE")]
    pub bridge: Option<String>,
    #[arg(long, env = "EMGWIRE_DURATION_S", default_value_t = 6.0)]
    pub duration_s: f64,
    #[arg(long)]
    pub notch: bool,
    #[arg(long, default_value_t = 60.0)]
    pub notch_freq: f64,
    /// Store the notched signal instead of the decoded one.
    #[arg(long)]
    pub record_post_notch: bool,
    #[arg(long, env = "EMGWIRE_OUTPUT")]
    pub output: Option<PathBuf>,
    /// Bridge only: directory for `save` without a path.
    #[arg(long, default_value = ".")]
    pub save_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SineArgs {
    #[arg(long, default_value_t = 1.0)]
    pub freq: f64,
    /// Peak amplitude in mV.
    #[arg(long, default_value_t = 17.63)]
    pub amplitude_mv: f64,
    #[arg(long, default_value_t = 2.0)]
    pub duration_s: f64,
    #[arg(long, env = "EMGWIRE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "EMGWIRE_VIRTUAL_CLOCK")]
    pub virtual_clock: bool,
    /// Also write `key=value` results here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Reference CSV; a synthetic gesture recording with baseline wander is used if omitted.
    pub file: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    /// Sample rate of a file without a time column.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Length of the synthetic reference.
    #[arg(long, default_value_t = 6.0)]
    pub duration_s: f64,
    #[arg(long, env = "EMGWIRE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Recording CSV (`t_s,ch1_mV,...`).
    pub file: PathBuf,
    /// 1-based channel; all channels are summed if omitted.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub channel: Option<u8>,
    #[arg(long, default_value_t = 2048)]
    pub n_fft: usize,
    /// hann | rectangular
    #[arg(long, default_value = "hann")]
    pub window: String,
    #[arg(long, default_value_t = 1000.0)]
    pub fs: f64,
    /// Write `freq_hz,magnitude_db` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct ThroughputArgs {
    #[arg(long, env = "EMGWIRE_BAUD", default_value_t = 115_200.0)]
    pub baud: f64,
    #[arg(long, conflicts_with = "frame_bytes")]
    pub frame_bits: Option<u32>,
    /// Frame length in bytes; 10 bits each on the wire.
    #[arg(long, default_value_t = 11)]
    pub frame_bytes: u32,
}

/// Parses `args` and runs the command. Stream data goes to `out`, reports
/// and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Throughput(a) => {
            let bits = a.frame_bits.unwrap_or_else(|| uart_frame_bits(a.frame_bytes));
            let hz = throughput(a.baud, f64::from(bits))?;
            writeln!(out, "{hz:.3} Hz")?;
            Ok(EXIT_OK)
        }
        Command::Device(a) => cmd_device(a, out, err),
        Command::Host(a) => cmd_host(a, out, err),
        Command::ValidateSine(a) => {
            let r = validate_sine(&SineValidation {
                freq_hz: a.freq,
                amplitude_v: a.amplitude_mv * 1e-3,
                duration_s: a.duration_s,
                seed: a.seed,
                clock: clock_mode(a.virtual_clock),
            })?;
            emit_report(&r, a.report.as_deref(), out)
        }
        Command::ValidateReplay(a) => {
            let data = match &a.file {
                Some(p) => ReplayData::load(p, a.rate)?,
                None => synthetic_reference(a.duration_s, a.seed)?,
            };
            let r = validate_replay(Arc::new(data), a.gain, a.seed)?;
            emit_report(&r, a.report.as_deref(), out)
        }
        Command::Spectrum(a) => cmd_spectrum(a, out),
    }
}

fn clock_mode(virtual_clock: bool) -> ClockMode {
    if virtual_clock {
        ClockMode::Virtual
    } else {
        ClockMode::RealTime
    }
}

fn emit_report(r: &ValidationReport, kv: Option<&std::path::Path>, out: &mut dyn Write) -> Result<i32> {
    writeln!(out, "{r}")?;
    if let Some(p) = kv {
        r.write_key_values(p)?;
    }
    Ok(if r.passed() { EXIT_OK } else { EXIT_RUNTIME })
}

fn write_device_report(r: &DeviceReport, err: &mut dyn Write) -> io::Result<()> {
    writeln!(
        err,
        "device: {} frames, {} bytes in {:.3} s ({:.1} frames/s, {:.1} B/s), {:?}",
        r.frames,
        r.bytes,
        r.elapsed.as_secs_f64(),
        r.frame_rate(),
        r.byte_rate(),
        r.outcome
    )
}

fn write_session(o: &SessionOutcome, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "{}", o.summary)
}

fn cmd_device(a: DeviceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let transport: TransportSpec = a.transport.parse()?;
    let mut source: SourceSpec = a.source.parse()?;
    if let SourceSpec::Replay(r) = &mut source {
        r.gain = a.gain;
    }
    let mut cfg = DeviceConfig {
        baud: a.link.baud,
        frame_bits: a.link.frame_bits,
        transport: transport.clone(),
        bypass_filter: a.bypass_filter,
        mains_amplitude: a.mains_mv * 1e-3,
        mains_freq: a.mains_freq,
        seed: a.seed,
        clock: clock_mode(a.virtual_clock),
        ..DeviceConfig::default()
    };
    if let Some(d) = a.duration_s {
        if !(d > 0.0) {
            return Err(Error::Config(format!("duration must be positive, got {d}")));
        }
        cfg.max_frames = Some((d * cfg.sample_rate).round() as u64);
    }
    let device = Device::from_spec(&cfg, &source)?;

    let report = match transport {
        TransportSpec::Loopback => {
            let session = SessionConfig {
                duration_s: a.duration_s.unwrap_or(6.0),
                notch_enabled: a.notch,
                output: a.output,
                ..SessionConfig::default()
            };
            // The host decides when to stop; let the device outrun it.
            cfg.max_frames = None;
            let control = SessionControl::new(a.notch);
            let run = run_loopback(&cfg, device, &session, &control, None)?;
            write_session(&run.session, out)?;
            run.device
        }
        TransportSpec::Tcp(addr) => {
            let mut stream = connect_tcp(&addr)?;
            let mut device = device;
            run_device_with_mode(&cfg, &mut device, &mut stream, None)
        }
        TransportSpec::Stdout => {
            let mut device = device;
            run_device_with_mode(&cfg, &mut device, out, None)
        }
    };
    write_device_report(&report, err)?;
    match report.outcome {
        crate::device::DeviceOutcome::TransportLost(e) if !matches!(cfg.transport, TransportSpec::Loopback) => {
            Err(Error::Transport(e))
        }
        _ => Ok(EXIT_OK),
    }
}

fn cmd_host(a: HostArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let session = SessionConfig {
        duration_s: a.duration_s,
        notch_enabled: a.notch,
        notch: NotchSpec {
            f0: a.notch_freq,
            ..NotchSpec::default()
        },
        output: a.output.clone(),
        record_post_notch: a.record_post_notch,
        ..SessionConfig::default()
    };
    session.validate()?;
    let device_listener = match &a.listen {
        Some(addr) => {
            let l = TcpListener::bind(addr).map_err(Error::Transport)?;
            writeln!(err, "device input on {}", l.local_addr()?)?;
            err.flush()?;
            Some(l)
        }
        None => None,
    };

    if let Some(addr) = &a.bridge {
        let bridge = Bridge::new(BridgeConfig {
            session,
            save_dir: a.save_dir,
            ..BridgeConfig::default()
        })?;
        let ui = TcpListener::bind(addr).map_err(Error::Transport)?;
        writeln!(err, "panel bridge on ws://{}", ui.local_addr()?)?;
        err.flush()?;
        let _ui = bridge.serve_ui(ui);
        match device_listener {
            Some(l) => {
                let _ = bridge.serve_device(l).join();
            }
            None => bridge.feed(io::stdin().lock())?,
        }
        return Ok(EXIT_OK);
    }

    let control = SessionControl::new(a.notch);
    let outcome = match device_listener {
        Some(l) => {
            let (stream, peer) = l.accept().map_err(Error::Transport)?;
            writeln!(err, "device connected from {peer}")?;
            run_session(&session, stream, &control, None)?
        }
        None => run_session(&session, io::stdin().lock(), &control, None)?,
    };
    write_session(&outcome, out)?;
    Ok(if outcome.summary.partial { EXIT_RUNTIME } else { EXIT_OK })
}

fn cmd_spectrum(a: SpectrumArgs, out: &mut dyn Write) -> Result<i32> {
    let window: Window = a.window.parse()?;
    let rec = read_csv(&a.file)?;
    let cfg = SpectrumConfig {
        n_fft: a.n_fft,
        window,
    };
    let channels: Vec<usize> = match a.channel {
        Some(c) => vec![usize::from(c) - 1],
        None => (0..CHANNELS).collect(),
    };
    let mut total: Option<analysis::Spectrum> = None;
    for c in channels {
        let x: Vec<f64> = rec.iter().map(|b| b.ch[c] * 1e3).collect();
        let s = spectrum(&x, a.fs, cfg)?;
        match total.as_mut() {
            Some(t) => t.accumulate(&s)?,
            None => total = Some(s),
        }
    }
    let s = total.ok_or(Error::EmptyRecording)?;
    writeln!(out, "samples     : {}", rec.len())?;
    writeln!(out, "resolution  : {:.4} Hz", s.resolution())?;
    writeln!(out, "total power : {:.6e} mV^2", s.total_power())?;
    writeln!(out, "above 400 Hz: {:.4}%", 100.0 * s.fraction_above(400.0))?;
    for (f, p) in s.peaks(a.top) {
        writeln!(out, "peak {f:>9.3} Hz  {:>8.2} dB", 10.0 * p.log10())?;
    }
    if let Some(p) = &a.out {
        s.save_csv(p)?;
    }
    Ok(EXIT_OK)
}

/// Entry point for the binary.
pub fn main_with_std() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    run(std::env::args_os(), &mut out, &mut err)
}
