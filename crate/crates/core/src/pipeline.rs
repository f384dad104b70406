//! Device and host in one process, joined by a loopback pipe.

use std::sync::atomic::AtomicBool;
use std::sync::mpsc::SyncSender;
use std::sync::Arc;

use crate::device::{run_device_with_mode, Device, DeviceConfig, DeviceReport, SourceSpec};
use crate::error::{Error, Result};
use crate::host::{run_session, LiveBatch, SessionConfig, SessionControl, SessionOutcome};
use crate::transport::loopback_pipe;

#[derive(Debug)]
pub struct LoopbackRun {
    pub device: DeviceReport,
    pub session: SessionOutcome,
}

/// Streams `device` into a host session until the session ends, then stops
/// the device.
pub fn run_loopback(
    dev_cfg: &DeviceConfig,
    mut device: Device,
    session: &SessionConfig,
    control: &SessionControl,
    live: Option<&SyncSender<LiveBatch>>,
) -> Result<LoopbackRun> {
    let (mut writer, reader) = loopback_pipe(64);
    let stop = Arc::new(AtomicBool::new(false));
    let dev_cfg = dev_cfg.clone();
    let dev_stop = Arc::clone(&stop);
    let handle = std::thread::spawn(move || {
        run_device_with_mode(&dev_cfg, &mut device, &mut writer, Some(&dev_stop))
    });
    let outcome = run_session(session, reader, control, live);
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    let device = handle
        .join()
        .map_err(|_| Error::Io(std::io::Error::other("device thread panicked")))?;
    Ok(LoopbackRun {
        device,
        session: outcome?,
    })
}

/// Builds the device from a source spec and runs it through a session.
pub fn simulate(
    dev_cfg: &DeviceConfig,
    source: &SourceSpec,
    session: &SessionConfig,
) -> Result<LoopbackRun> {
    let device = Device::from_spec(dev_cfg, source)?;
    let control = SessionControl::new(session.notch_enabled);
    run_loopback(dev_cfg, device, session, &control, None)
}
