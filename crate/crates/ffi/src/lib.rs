//! C ABI over the wire codec, frame synchronizer and filters.
//!
//! Every fallible call returns an [`EmgStatus`] and writes its result through
//! an out-pointer. Handles are opaque and must be released with the matching
//! `*_free` function. No call unwinds across the boundary.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use emgwire::codec::{self, FrameSync, Raw24Sample, WindowCode, CHANNELS, FRAME_LEN};
use emgwire::signal_chain::{self, AdcSpec, Filter, Notch, NotchSpec};
use emgwire::Error;

pub const EMG_CHANNELS: usize = 8;
pub const EMG_FRAME_LEN: usize = 11;

const _: () = assert!(EMG_CHANNELS == CHANNELS && EMG_FRAME_LEN == FRAME_LEN);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmgStatus {
    Ok = 0,
    NullPointer = 1,
    OutOfRange = 2,
    BadMarker = 3,
    Domain = 4,
    Config = 5,
    Internal = 6,
}

impl From<&Error> for EmgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Range { .. } => EmgStatus::OutOfRange,
            Error::BadMarker { .. } => EmgStatus::BadMarker,
            Error::Domain(_) => EmgStatus::Domain,
            Error::Config(_) => EmgStatus::Config,
            _ => EmgStatus::Internal,
        }
    }
}

/// One 10-bit protocol word. `positive` is 1 for the positive sign.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmgWindowCode {
    pub positive: u8,
    pub magnitude: u16,
}

impl From<WindowCode> for EmgWindowCode {
    fn from(c: WindowCode) -> Self {
        Self {
            positive: c.is_positive() as u8,
            magnitude: c.magnitude(),
        }
    }
}

impl TryFrom<EmgWindowCode> for WindowCode {
    type Error = Error;

    fn try_from(c: EmgWindowCode) -> Result<Self, Error> {
        WindowCode::new(c.positive != 0, c.magnitude)
    }
}

/// Opaque frame synchronizer.
pub struct EmgFrameSync {
    inner: FrameSync,
}

/// Opaque 60 Hz style notch filter.
pub struct EmgNotch {
    inner: Notch,
}

fn guard(f: impl FnOnce() -> Result<(), EmgStatus>) -> EmgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => EmgStatus::Internal,
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, EmgStatus> {
    p.as_mut().ok_or(EmgStatus::NullPointer)
}

fn status(e: Error) -> EmgStatus {
    EmgStatus::from(&e)
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn emg_status_str(status: EmgStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        EmgStatus::Ok => b"ok\0",
        EmgStatus::NullPointer => b"null pointer\0",
        EmgStatus::OutOfRange => b"value out of range\0",
        EmgStatus::BadMarker => b"bad end-of-frame marker\0",
        EmgStatus::Domain => b"argument outside the function's domain\0",
        EmgStatus::Config => b"invalid configuration\0",
        EmgStatus::Internal => b"internal error\0",
    };
    s.as_ptr().cast()
}

/// Maps a 24-bit two's-complement conversion to its window code.
///
/// # Safety
/// `out_code` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emg_encode_window(raw: i32, out_code: *mut EmgWindowCode) -> EmgStatus {
    guard(|| {
        let o = out(out_code)?;
        let r = Raw24Sample::new(raw).map_err(status)?;
        *o = codec::encode_window(r).into();
        Ok(())
    })
}

/// Signed step count of a window code, in [-511, 511].
///
/// # Safety
/// `out_steps` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emg_decode_window(code: EmgWindowCode, out_steps: *mut i16) -> EmgStatus {
    guard(|| {
        let o = out(out_steps)?;
        *o = codec::decode_window(WindowCode::try_from(code).map_err(status)?);
        Ok(())
    })
}

/// Packs eight codes into an 11-byte frame.
///
/// # Safety
/// `codes` must point to 8 readable codes and `frame` to 11 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn emg_pack_frame(codes: *const EmgWindowCode, frame: *mut u8) -> EmgStatus {
    guard(|| {
        if codes.is_null() || frame.is_null() {
            return Err(EmgStatus::NullPointer);
        }
        let src = std::slice::from_raw_parts(codes, CHANNELS);
        let mut words = [WindowCode::ZERO; CHANNELS];
        for (w, c) in words.iter_mut().zip(src) {
            *w = WindowCode::try_from(*c).map_err(status)?;
        }
        let f = codec::pack_frame(&words);
        ptr::copy_nonoverlapping(f.as_bytes().as_ptr(), frame, FRAME_LEN);
        Ok(())
    })
}

/// Unpacks an 11-byte frame into eight codes.
///
/// # Safety
/// `frame` must point to 11 readable bytes and `codes` to 8 writable codes.
#[no_mangle]
pub unsafe extern "C" fn emg_unpack_frame(frame: *const u8, codes: *mut EmgWindowCode) -> EmgStatus {
    guard(|| {
        if codes.is_null() || frame.is_null() {
            return Err(EmgStatus::NullPointer);
        }
        let f = codec::Frame::from_slice(std::slice::from_raw_parts(frame, FRAME_LEN)).map_err(status)?;
        let dst = std::slice::from_raw_parts_mut(codes, CHANNELS);
        for (d, c) in dst.iter_mut().zip(codec::unpack_frame(&f)) {
            *d = c.into();
        }
        Ok(())
    })
}

/// Frames per second: `baud / frame_bits`.
///
/// # Safety
/// `out_hz` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emg_throughput(baud: f64, frame_bits: f64, out_hz: *mut f64) -> EmgStatus {
    guard(|| {
        let o = out(out_hz)?;
        *o = codec::throughput(baud, frame_bits).map_err(status)?;
        Ok(())
    })
}

/// Quantizes a voltage with the default converter (4.5 V reference, gain 1).
#[no_mangle]
pub extern "C" fn emg_adc_quantize(volts: f64) -> i32 {
    signal_chain::adc_quantize(&AdcSpec::default(), volts).value()
}

/// Volts represented by a signed step count.
///
/// # Safety
/// `out_volts` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emg_code_to_volts(steps: i32, out_volts: *mut f64) -> EmgStatus {
    guard(|| {
        let o = out(out_volts)?;
        *o = signal_chain::code_to_volts(steps).map_err(status)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn emg_frame_sync_new() -> *mut EmgFrameSync {
    Box::into_raw(Box::new(EmgFrameSync {
        inner: FrameSync::new(),
    }))
}

/// Feeds one byte. When a frame completes, copies it to `frame` and sets
/// `*ready` to 1; otherwise sets `*ready` to 0.
///
/// # Safety
/// `sync` must come from [`emg_frame_sync_new`]; `frame` must have room for
/// 11 bytes and `ready` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emg_frame_sync_push(
    sync: *mut EmgFrameSync,
    byte: u8,
    frame: *mut u8,
    ready: *mut u8,
) -> EmgStatus {
    guard(|| {
        let s = out(sync)?;
        let r = out(ready)?;
        if frame.is_null() {
            return Err(EmgStatus::NullPointer);
        }
        *r = 0;
        if let Some(f) = s.inner.push(byte) {
            ptr::copy_nonoverlapping(f.as_bytes().as_ptr(), frame, FRAME_LEN);
            *r = 1;
        }
        Ok(())
    })
}

/// # Safety
/// `sync` must be null or come from [`emg_frame_sync_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emg_frame_sync_free(sync: *mut EmgFrameSync) {
    if !sync.is_null() {
        drop(Box::from_raw(sync));
    }
}

/// Creates a notch at `f0` Hz with a -3 dB width of `bandwidth` Hz.
///
/// # Safety
/// `out_notch` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn emg_notch_new(
    f0: f64,
    bandwidth: f64,
    fs: f64,
    out_notch: *mut *mut EmgNotch,
) -> EmgStatus {
    guard(|| {
        let o = out(out_notch)?;
        *o = ptr::null_mut();
        let n = Notch::new(NotchSpec { f0, bandwidth }, fs).map_err(status)?;
        *o = Box::into_raw(Box::new(EmgNotch { inner: n }));
        Ok(())
    })
}

/// Filters `len` samples in place.
///
/// # Safety
/// `notch` must come from [`emg_notch_new`]; `samples` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn emg_notch_process(notch: *mut EmgNotch, samples: *mut f64, len: usize) -> EmgStatus {
    guard(|| {
        let n = out(notch)?;
        if len == 0 {
            return Ok(());
        }
        if samples.is_null() {
            return Err(EmgStatus::NullPointer);
        }
        n.inner.apply(std::slice::from_raw_parts_mut(samples, len));
        Ok(())
    })
}

/// # Safety
/// `notch` must be null or come from [`emg_notch_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emg_notch_free(notch: *mut EmgNotch) {
    if !notch.is_null() {
        drop(Box::from_raw(notch));
    }
}
