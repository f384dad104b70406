//! The acquisition-board side: sources, analog model, encoder and a paced
//! writer that keeps to the serial link budget.

mod clock;
pub mod source;

pub use clock::{Clock, RealClock, TokenBucket, VirtualClock};
pub use source::{make_source, GestureScript, GestureSegment, SineParams, Source, SourceSpec};

use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{self, encode_window, pack_frame, Frame, CHANNELS, FRAME_LEN};
use crate::error::{Error, Result};
use crate::signal_chain::{
    adc_quantize, AdcSpec, BandPass, BandPassSpec, Filter, MainsInjector, Sample8,
};
use crate::transport::TransportSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    #[default]
    RealTime,
    /// Runs as fast as the consumer allows; timing is simulated.
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub sample_rate: f64,
    /// Analog model rate as a multiple of `sample_rate`.
    pub oversample: u32,
    pub baud: f64,
    /// Bits per frame on the wire including UART framing.
    pub frame_bits: u32,
    pub transport: TransportSpec,
    pub bypass_filter: bool,
    pub band_pass: BandPassSpec,
    pub adc: AdcSpec,
    pub mains_amplitude: f64,
    pub mains_freq: f64,
    pub seed: u64,
    pub clock: ClockMode,
    /// Stop after this many frames.
    pub max_frames: Option<u64>,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            sample_rate: 1000.0,
            oversample: 16,
            baud: 115_200.0,
            frame_bits: codec::uart_frame_bits(FRAME_LEN as u32),
            transport: TransportSpec::Loopback,
            bypass_filter: false,
            band_pass: BandPassSpec::default(),
            adc: AdcSpec::default(),
            mains_amplitude: 0.0,
            mains_freq: 60.0,
            seed: 0,
            clock: ClockMode::RealTime,
            max_frames: None,
        }
    }
}

impl DeviceConfig {
    pub fn internal_rate(&self) -> f64 {
        self.sample_rate * f64::from(self.oversample)
    }

    /// Rejects links that cannot carry one frame per conversion.
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || self.oversample == 0 {
            return Err(Error::Config("sample rate and oversample must be positive".into()));
        }
        let tp = codec::throughput(self.baud, f64::from(self.frame_bits))?;
        if tp <= self.sample_rate {
            return Err(Error::Config(format!(
                "link carries {tp:.3} frames/s at {} bps with {}-bit frames, below the {} SPS data rate",
                self.baud, self.frame_bits, self.sample_rate
            )));
        }
        if !self.bypass_filter {
            self.band_pass.validate(self.internal_rate())?;
        }
        if !(self.mains_amplitude >= 0.0) {
            return Err(Error::Config("mains amplitude must be >= 0".into()));
        }
        Ok(())
    }

    /// Byte budget of the link: one UART character is 10 bits.
    pub fn byte_rate(&self) -> f64 {
        self.baud / f64::from(codec::UART_BITS_PER_BYTE)
    }
}

/// Turns source samples into wire frames: mains pickup, band-pass at the
/// oversampled rate, decimation, quantization, windowing and packing.
pub struct Device {
    source: Box<dyn Source>,
    filters: Option<[BandPass; CHANNELS]>,
    mains: MainsInjector,
    adc: AdcSpec,
    oversample: u32,
}

impl Device {
    pub fn new(cfg: &DeviceConfig, source: Box<dyn Source>) -> Result<Self> {
        cfg.validate()?;
        let fs = cfg.internal_rate();
        let filters = if cfg.bypass_filter {
            None
        } else {
            let bp = BandPass::new(cfg.band_pass, fs)?;
            Some([bp; CHANNELS])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x6d61_696e));
        let mains = MainsInjector::new(cfg.mains_amplitude, cfg.mains_freq, fs, &mut rng)?;
        Ok(Self {
            source,
            filters,
            mains,
            adc: cfg.adc,
            oversample: cfg.oversample,
        })
    }

    pub fn from_spec(cfg: &DeviceConfig, spec: &SourceSpec) -> Result<Self> {
        let source = make_source(spec, cfg.internal_rate(), cfg.seed)?;
        Self::new(cfg, source)
    }

    /// Frames left before the source runs dry, if finite.
    pub fn remaining_frames(&self) -> Option<u64> {
        self.source
            .remaining()
            .map(|n| n / u64::from(self.oversample))
    }

    /// Analog value presented to the converter for the next output sample.
    pub fn next_analog(&mut self) -> Option<Sample8> {
        let mut kept = None;
        for k in 0..self.oversample {
            let mut s = self.source.next_sample()?;
            self.mains.apply(&mut s);
            if let Some(filters) = self.filters.as_mut() {
                for (x, f) in s.iter_mut().zip(filters.iter_mut()) {
                    *x = f.process(*x);
                }
            }
            if k == 0 {
                kept = Some(s);
            }
        }
        kept
    }

    pub fn next_frame(&mut self) -> Option<Frame> {
        let analog = self.next_analog()?;
        let codes = analog.map(|v| encode_window(adc_quantize(&self.adc, v)));
        Some(pack_frame(&codes))
    }
}

impl Iterator for Device {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        self.next_frame()
    }
}

#[derive(Debug)]
pub enum DeviceOutcome {
    /// `max_frames` reached.
    Completed,
    SourceExhausted,
    Stopped,
    TransportLost(io::Error),
}

#[derive(Debug)]
pub struct DeviceReport {
    pub frames: u64,
    pub bytes: u64,
    /// Time on the device clock (simulated in virtual mode).
    pub elapsed: Duration,
    pub outcome: DeviceOutcome,
}

impl DeviceReport {
    pub fn frame_rate(&self) -> f64 {
        self.frames as f64 / self.elapsed.as_secs_f64().max(f64::MIN_POSITIVE)
    }

    pub fn byte_rate(&self) -> f64 {
        self.bytes as f64 / self.elapsed.as_secs_f64().max(f64::MIN_POSITIVE)
    }

    pub fn is_transport_error(&self) -> bool {
        matches!(self.outcome, DeviceOutcome::TransportLost(_))
    }
}

/// Writes frames from `device` to `out`, frame `n` no earlier than
/// `n / sample_rate` seconds and never faster than the link byte budget.
pub fn run_device<W: Write + ?Sized, C: Clock>(
    cfg: &DeviceConfig,
    device: &mut Device,
    out: &mut W,
    clock: &mut C,
    stop: Option<&AtomicBool>,
) -> DeviceReport {
    let mut bucket = TokenBucket::new(cfg.byte_rate(), FRAME_LEN as f64);
    let period = 1.0 / cfg.sample_rate;
    let mut frames = 0u64;
    let mut bytes = 0u64;

    let outcome = loop {
        if cfg.max_frames.is_some_and(|m| frames >= m) {
            break DeviceOutcome::Completed;
        }
        if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            break DeviceOutcome::Stopped;
        }
        let Some(frame) = device.next_frame() else {
            break DeviceOutcome::SourceExhausted;
        };
        let due = Duration::from_secs_f64(frames as f64 * period);
        clock.sleep_until(due);
        let ready = bucket.reserve(FRAME_LEN as f64, clock.now());
        clock.sleep_until(ready);
        if let Err(e) = out.write_all(frame.as_bytes()) {
            break DeviceOutcome::TransportLost(e);
        }
        frames += 1;
        bytes += FRAME_LEN as u64;
    };
    let outcome = match (outcome, out.flush()) {
        (DeviceOutcome::TransportLost(e), _) => DeviceOutcome::TransportLost(e),
        (_, Err(e)) => DeviceOutcome::TransportLost(e),
        (o, Ok(())) => o,
    };
    // The last frame occupies one period on the link.
    let elapsed = if frames > 0 {
        clock.now().max(Duration::from_secs_f64(frames as f64 * period))
    } else {
        clock.now()
    };
    DeviceReport {
        frames,
        bytes,
        elapsed,
        outcome,
    }
}

/// Runs with the clock selected by `cfg.clock`.
pub fn run_device_with_mode<W: Write + ?Sized>(
    cfg: &DeviceConfig,
    device: &mut Device,
    out: &mut W,
    stop: Option<&AtomicBool>,
) -> DeviceReport {
    match cfg.clock {
        ClockMode::RealTime => run_device(cfg, device, out, &mut RealClock::new(), stop),
        ClockMode::Virtual => run_device(cfg, device, out, &mut VirtualClock::new(), stop),
    }
}
