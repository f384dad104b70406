//! Host side: frame recovery, decoding to volts, the optional mains notch,
//! session control and recording.

pub mod bridge;
mod record;

pub use record::{
    format_row, parse_csv, read_csv, record_csv, CsvRecorder, RecorderHandle, CSV_HEADER,
};

use std::fmt;
use std::io::{ErrorKind, Read};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::SyncSender;
use std::time::Instant;

use crate::codec::{decode_window, unpack_frame, FrameSync, SyncEvent, CHANNELS, FRAME_LEN};
use crate::error::{Error, Result};
use crate::signal_chain::{code_to_volts, Filter, Notch, NotchSpec, Sample8};

/// One decoded 8-channel sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelBlock {
    pub index: u64,
    /// Seconds, from the sample index at the nominal rate.
    pub t: f64,
    /// Volts.
    pub ch: Sample8,
}

impl ChannelBlock {
    pub fn millivolts(&self) -> Sample8 {
        self.ch.map(|v| v * 1e3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub duration_s: f64,
    pub notch_enabled: bool,
    pub notch: NotchSpec,
    /// Recording path; nothing is written when `None`.
    pub output: Option<PathBuf>,
    /// Record the notched signal instead of the decoded one.
    pub record_post_notch: bool,
    pub sample_rate: f64,
    /// Samples per live batch.
    pub batch_size: usize,
    /// Abort after this long (at the nominal byte rate) without frame lock.
    pub sync_timeout_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            duration_s: 6.0,
            notch_enabled: false,
            notch: NotchSpec::default(),
            output: None,
            record_post_notch: false,
            sample_rate: 1000.0,
            batch_size: 50,
            sync_timeout_s: 1.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!(
                "session duration must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.sample_rate > 0.0) || self.batch_size == 0 || !(self.sync_timeout_s > 0.0) {
            return Err(Error::Config("sample rate, batch size and sync timeout must be positive".into()));
        }
        self.notch.validate(self.sample_rate)
    }

    pub fn target_samples(&self) -> u64 {
        (self.duration_s * self.sample_rate).round() as u64
    }

    fn sync_timeout_bytes(&self) -> usize {
        (self.sync_timeout_s * self.sample_rate) as usize * FRAME_LEN
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    Duration,
    Command,
    EndOfStream,
    SyncLost,
    Transport(String),
}

impl StopReason {
    /// Whether the recording was cut short by a fault.
    pub fn is_fault(&self) -> bool {
        matches!(self, StopReason::SyncLost | StopReason::Transport(_))
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Duration => "duration",
            StopReason::Command => "command",
            StopReason::EndOfStream => "end_of_stream",
            StopReason::SyncLost => "sync_lost",
            StopReason::Transport(_) => "transport",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Transport(msg) => write!(f, "transport: {msg}"),
            other => f.write_str(other.as_str()),
        }
    }
}

/// Acquisition state machine: idle/stopped -> acquiring -> idle (stop
/// command) or stopped (duration, end of stream, fault).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    Acquiring { started_at: Instant, samples: u64 },
    Stopped(StopReason),
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::Acquiring { .. } => "acquiring",
            SessionState::Stopped(_) => "stopped",
        }
    }

    pub fn is_acquiring(&self) -> bool {
        matches!(self, SessionState::Acquiring { .. })
    }

    pub fn start(&mut self) -> Result<()> {
        if self.is_acquiring() {
            return Err(Error::Config("busy".into()));
        }
        *self = SessionState::Acquiring {
            started_at: Instant::now(),
            samples: 0,
        };
        Ok(())
    }

    /// Ends an acquisition. A stop command returns to idle; anything else
    /// lands in `Stopped`.
    pub fn finish(&mut self, reason: StopReason) -> Result<()> {
        if !self.is_acquiring() {
            return Err(Error::Config("not acquiring".into()));
        }
        *self = match reason {
            StopReason::Command => SessionState::Idle,
            r => SessionState::Stopped(r),
        };
        Ok(())
    }
}

/// Shared knobs a running session polls once per sample.
#[derive(Debug, Default)]
pub struct SessionControl {
    stop: AtomicBool,
    notch: AtomicBool,
}

impl SessionControl {
    pub fn new(notch_enabled: bool) -> Self {
        Self {
            stop: AtomicBool::new(false),
            notch: AtomicBool::new(notch_enabled),
        }
    }

    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::Relaxed);
    }

    pub fn stop_requested(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }

    pub fn set_notch(&self, on: bool) {
        self.notch.store(on, Ordering::Relaxed);
    }

    pub fn notch_enabled(&self) -> bool {
        self.notch.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeEvent {
    Pending,
    Sample(Sample8),
    Lost,
}

/// Frame sync plus window decoding to volts.
#[derive(Debug, Clone, Default)]
pub struct Decoder {
    sync: FrameSync,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sync(&self) -> &FrameSync {
        &self.sync
    }

    pub fn push(&mut self, byte: u8) -> DecodeEvent {
        match self.sync.push_event(byte) {
            SyncEvent::Pending => DecodeEvent::Pending,
            SyncEvent::Lost => DecodeEvent::Lost,
            SyncEvent::Frame { frame, .. } => {
                let codes = unpack_frame(&frame);
                // decode_window is within +-511, so the conversion cannot fail.
                DecodeEvent::Sample(codes.map(|c| {
                    code_to_volts(decode_window(c).into()).unwrap_or_default()
                }))
            }
        }
    }
}

/// A block of live samples for display, in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveBatch {
    pub index: u64,
    pub mv: Vec<Sample8>,
}

/// What one decoded sample turns into.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub recorded: ChannelBlock,
    pub batch: Option<LiveBatch>,
}

/// Per-session sample bookkeeping: indices, the notch bank and live
/// batching. The notch always runs so toggling it takes effect on the very
/// next sample without a fresh transient.
#[derive(Debug, Clone)]
pub struct Acquisition {
    target: u64,
    next_index: u64,
    sample_rate: f64,
    notches: [Notch; CHANNELS],
    record_post_notch: bool,
    batch_size: usize,
    batch: Vec<Sample8>,
    batch_start: u64,
}

impl Acquisition {
    pub fn new(cfg: &SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let notch = Notch::new(cfg.notch, cfg.sample_rate)?;
        Ok(Self {
            target: cfg.target_samples(),
            next_index: 0,
            sample_rate: cfg.sample_rate,
            notches: [notch; CHANNELS],
            record_post_notch: cfg.record_post_notch,
            batch_size: cfg.batch_size,
            batch: Vec::with_capacity(cfg.batch_size),
            batch_start: 0,
        })
    }

    pub fn samples(&self) -> u64 {
        self.next_index
    }

    pub fn is_complete(&self) -> bool {
        self.next_index >= self.target
    }

    pub fn ingest(&mut self, volts: Sample8, notch_on: bool) -> Ingested {
        let index = self.next_index;
        self.next_index += 1;
        let mut notched = volts;
        for (x, n) in notched.iter_mut().zip(self.notches.iter_mut()) {
            *x = n.process(*x);
        }
        let live = if notch_on { notched } else { volts };
        let recorded = ChannelBlock {
            index,
            t: index as f64 / self.sample_rate,
            ch: if self.record_post_notch { live } else { volts },
        };
        if self.batch.is_empty() {
            self.batch_start = index;
        }
        self.batch.push(live.map(|v| v * 1e3));
        let batch = (self.batch.len() >= self.batch_size).then(|| self.take_batch()).flatten();
        Ingested { recorded, batch }
    }

    /// Emits any partially filled batch.
    pub fn take_batch(&mut self) -> Option<LiveBatch> {
        if self.batch.is_empty() {
            return None;
        }
        Some(LiveBatch {
            index: self.batch_start,
            mv: std::mem::replace(&mut self.batch, Vec::with_capacity(self.batch_size)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub frames_received: u64,
    pub samples_recorded: u64,
    pub sync_losses: u64,
    pub bytes_in: u64,
    pub duration_s: f64,
    pub stop_reason: StopReason,
    /// Set when a fault cut the recording short.
    pub partial: bool,
    pub recording_path: Option<PathBuf>,
}

impl fmt::Display for SessionSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames received : {}", self.frames_received)?;
        writeln!(f, "samples recorded: {}", self.samples_recorded)?;
        writeln!(f, "duration        : {:.3} s", self.duration_s)?;
        writeln!(f, "sync losses     : {}", self.sync_losses)?;
        writeln!(f, "bytes in        : {}", self.bytes_in)?;
        writeln!(f, "stop reason     : {}", self.stop_reason)?;
        if self.partial {
            writeln!(f, "recording       : PARTIAL")?;
        }
        match &self.recording_path {
            Some(p) => write!(f, "recording file  : {}", p.display()),
            None => write!(f, "recording file  : (none)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub recording: Vec<ChannelBlock>,
    pub summary: SessionSummary,
}

/// Reads a device stream until the configured duration, end of stream, a
/// stop request or a fault. Decoded samples go to a recorder thread; live
/// batches are offered to `live` and dropped if it is full.
pub fn run_session<R: Read>(
    cfg: &SessionConfig,
    mut reader: R,
    control: &SessionControl,
    live: Option<&SyncSender<LiveBatch>>,
) -> Result<SessionOutcome> {
    let mut acq = Acquisition::new(cfg)?;
    let mut decoder = Decoder::new();
    let recorder = RecorderHandle::spawn(cfg.output.clone(), 1024);
    let timeout = cfg.sync_timeout_bytes();
    let offer = |batch: Option<LiveBatch>| {
        if let (Some(tx), Some(b)) = (live, batch) {
            let _ = tx.try_send(b);
        }
    };

    let mut buf = [0u8; 4096];
    let reason = 'read: loop {
        if control.stop_requested() {
            break StopReason::Command;
        }
        if acq.is_complete() {
            break StopReason::Duration;
        }
        let n = match reader.read(&mut buf) {
            Ok(0) => break StopReason::EndOfStream,
            Ok(n) => n,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => break StopReason::Transport(e.to_string()),
        };
        for &byte in &buf[..n] {
            match decoder.push(byte) {
                DecodeEvent::Sample(volts) => {
                    if control.stop_requested() {
                        break 'read StopReason::Command;
                    }
                    let out = acq.ingest(volts, control.notch_enabled());
                    recorder.push(out.recorded);
                    offer(out.batch);
                    if acq.is_complete() {
                        break 'read StopReason::Duration;
                    }
                }
                DecodeEvent::Lost | DecodeEvent::Pending => {
                    if !decoder.sync().is_locked() && decoder.sync().unlocked_run() > timeout {
                        break 'read StopReason::SyncLost;
                    }
                }
            }
        }
    };
    offer(acq.take_batch());

    let (recording, recording_path) = recorder.finish()?;
    let stats = decoder.sync().stats();
    let samples = recording.len() as u64;
    Ok(SessionOutcome {
        summary: SessionSummary {
            frames_received: stats.frames,
            samples_recorded: samples,
            sync_losses: stats.losses,
            bytes_in: stats.bytes_in,
            duration_s: samples as f64 / cfg.sample_rate,
            partial: reason.is_fault(),
            stop_reason: reason,
            recording_path,
        },
        recording,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{pack_frame, WindowCode};

    fn stream(n: usize, f: impl Fn(usize) -> [WindowCode; CHANNELS]) -> Vec<u8> {
        (0..n).flat_map(|i| pack_frame(&f(i)).as_bytes().to_vec()).collect()
    }

    fn ramp(i: usize) -> [WindowCode; CHANNELS] {
        std::array::from_fn(|c| WindowCode::new(c % 2 == 0, ((i + c) % 512) as u16).unwrap())
    }

    #[test]
    fn state_machine_transitions() {
        let mut s = SessionState::Idle;
        s.start().unwrap();
        assert!(s.start().is_err());
        s.finish(StopReason::Command).unwrap();
        assert_eq!(s, SessionState::Idle);
        assert!(s.finish(StopReason::Duration).is_err());
        s.start().unwrap();
        s.finish(StopReason::Duration).unwrap();
        assert_eq!(s.name(), "stopped");
        s.start().unwrap();
        assert_eq!(s.name(), "acquiring");
    }

    #[test]
    fn session_stops_at_duration() {
        let cfg = SessionConfig {
            duration_s: 0.5,
            ..SessionConfig::default()
        };
        let bytes = stream(800, ramp);
        let out = run_session(&cfg, bytes.as_slice(), &SessionControl::new(false), None).unwrap();
        assert_eq!(out.recording.len(), 500);
        assert_eq!(out.summary.stop_reason, StopReason::Duration);
        assert!(out
            .recording
            .iter()
            .enumerate()
            .all(|(i, b)| b.index == i as u64 && b.t == i as f64 / 1000.0));
        // First two frames are consumed by the sync search.
        let first = decode_window(ramp(2)[0]);
        assert_eq!(out.recording[0].ch[0], code_to_volts(first.into()).unwrap());
    }

    #[test]
    fn stop_before_start_gives_empty_recording() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SessionConfig {
            output: Some(dir.path().join("none.csv")),
            ..SessionConfig::default()
        };
        let ctl = SessionControl::new(false);
        ctl.request_stop();
        let out = run_session(&cfg, stream(100, ramp).as_slice(), &ctl, None).unwrap();
        assert!(out.recording.is_empty());
        assert_eq!(out.summary.stop_reason, StopReason::Command);
        assert!(!out.summary.partial);
        assert!(out.summary.recording_path.is_none());
    }

    #[test]
    fn garbage_prefix_costs_at_most_four_frames() {
        let cfg = SessionConfig::default();
        let clean = stream(400, ramp);
        let mut dirty = vec![1, 2, 3, 0xFF, 5];
        dirty.extend_from_slice(&clean);
        let ctl = SessionControl::new(false);
        let a = run_session(&cfg, clean.as_slice(), &ctl, None).unwrap();
        let b = run_session(&cfg, dirty.as_slice(), &ctl, None).unwrap();
        assert_eq!(a.summary.stop_reason, StopReason::EndOfStream);
        let lost = 400 - b.recording.len();
        assert!(lost <= 4, "lost {lost}");
        let skip = a.recording.len() - b.recording.len();
        for (x, y) in a.recording[skip..].iter().zip(&b.recording) {
            assert_eq!(x.ch, y.ch);
        }
    }

    #[test]
    fn sync_lost_flags_partial() {
        let cfg = SessionConfig::default();
        let mut bytes = stream(100, ramp);
        bytes.extend(std::iter::repeat_n(0x00, 12_000));
        let out = run_session(&cfg, bytes.as_slice(), &SessionControl::new(false), None).unwrap();
        assert_eq!(out.summary.stop_reason, StopReason::SyncLost);
        assert!(out.summary.partial);
        assert_eq!(out.recording.len(), 98);
        assert_eq!(out.summary.sync_losses, 1);
    }

    #[test]
    fn notch_off_is_bit_identical_and_live_batches_flow() {
        let cfg = SessionConfig {
            duration_s: 0.2,
            ..SessionConfig::default()
        };
        let (tx, rx) = std::sync::mpsc::sync_channel(64);
        let bytes = stream(300, ramp);
        let out = run_session(&cfg, bytes.as_slice(), &SessionControl::new(false), Some(&tx)).unwrap();
        let batches: Vec<LiveBatch> = rx.try_iter().collect();
        assert_eq!(batches.len(), 4);
        assert_eq!(batches[1].index, 50);
        for b in &batches {
            for (k, mv) in b.mv.iter().enumerate() {
                assert_eq!(*mv, out.recording[b.index as usize + k].millivolts());
            }
        }
    }

    #[test]
    fn stalled_live_consumer_does_not_affect_recording() {
        let cfg = SessionConfig {
            duration_s: 1.0,
            ..SessionConfig::default()
        };
        let (tx, _rx) = std::sync::mpsc::sync_channel(1);
        let bytes = stream(1200, ramp);
        let out = run_session(&cfg, bytes.as_slice(), &SessionControl::new(true), Some(&tx)).unwrap();
        assert_eq!(out.recording.len(), 1000);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SessionConfig {
            duration_s: 0.0,
            ..SessionConfig::default()
        };
        assert!(run_session(&cfg, &[][..], &SessionControl::new(false), None).is_err());
    }
}
