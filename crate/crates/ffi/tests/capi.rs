use std::ffi::CStr;
use std::ptr;

use emgwire_ffi::*;

fn code(positive: bool, magnitude: u16) -> EmgWindowCode {
    EmgWindowCode {
        positive: positive as u8,
        magnitude,
    }
}

#[test]
fn window_encode_decode() {
    let mut c = code(false, 0);
    unsafe {
        assert_eq!(emg_encode_window(-32704, &mut c), EmgStatus::Ok);
        assert_eq!(c, code(false, 511));
        assert_eq!(emg_encode_window(63, &mut c), EmgStatus::Ok);
        assert_eq!(c, code(true, 0));
        assert_eq!(emg_encode_window(1 << 23, &mut c), EmgStatus::OutOfRange);
        assert_eq!(emg_encode_window(0, ptr::null_mut()), EmgStatus::NullPointer);

        let mut steps = 0i16;
        assert_eq!(emg_decode_window(code(false, 29), &mut steps), EmgStatus::Ok);
        assert_eq!(steps, -29);
        assert_eq!(emg_decode_window(code(true, 512), &mut steps), EmgStatus::OutOfRange);
    }
}

#[test]
fn frame_round_trip_and_bad_marker() {
    let codes: [EmgWindowCode; EMG_CHANNELS] =
        std::array::from_fn(|i| code(i % 2 == 0, [0, 1, 255, 256, 511, 300, 7, 128][i]));
    let mut frame = [0u8; EMG_FRAME_LEN];
    let mut back = [code(true, 0); EMG_CHANNELS];
    unsafe {
        assert_eq!(emg_pack_frame(codes.as_ptr(), frame.as_mut_ptr()), EmgStatus::Ok);
        assert_eq!(frame[10], 0xFF);
        assert_eq!(emg_unpack_frame(frame.as_ptr(), back.as_mut_ptr()), EmgStatus::Ok);
        assert_eq!(back, codes);
        frame[10] = 0xFE;
        assert_eq!(emg_unpack_frame(frame.as_ptr(), back.as_mut_ptr()), EmgStatus::BadMarker);

        let zeros = [code(true, 0); EMG_CHANNELS];
        assert_eq!(emg_pack_frame(zeros.as_ptr(), frame.as_mut_ptr()), EmgStatus::Ok);
        assert_eq!(frame, [0, 0, 0, 0, 0, 0, 0, 0, 0xAA, 0xAA, 0xFF]);
    }
}

#[test]
fn numeric_helpers() {
    let mut hz = 0.0;
    let mut v = 0.0;
    unsafe {
        assert_eq!(emg_throughput(115_200.0, 240.0, &mut hz), EmgStatus::Ok);
        assert_eq!(hz, 480.0);
        assert_eq!(emg_throughput(115_200.0, 0.0, &mut hz), EmgStatus::Domain);
        assert_eq!(emg_code_to_volts(1, &mut v), EmgStatus::Ok);
        assert!((v - 34.332275390625e-6).abs() < 1e-18);
        assert_eq!(emg_code_to_volts(512, &mut v), EmgStatus::OutOfRange);
    }
    assert_eq!(emg_adc_quantize(1e-3), 1864);
    assert_eq!(emg_adc_quantize(-10.0), -(1 << 23));
    let msg = unsafe { CStr::from_ptr(emg_status_str(EmgStatus::BadMarker)) };
    assert_eq!(msg.to_str().unwrap(), "bad end-of-frame marker");
}

#[test]
fn frame_sync_handle() {
    let zeros = [code(true, 0); EMG_CHANNELS];
    let mut frame = [0u8; EMG_FRAME_LEN];
    let mut out = [0u8; EMG_FRAME_LEN];
    let mut ready = 0u8;
    unsafe {
        emg_pack_frame(zeros.as_ptr(), frame.as_mut_ptr());
        let h = emg_frame_sync_new();
        let mut got = 0;
        for _ in 0..5 {
            for &b in &frame {
                assert_eq!(emg_frame_sync_push(h, b, out.as_mut_ptr(), &mut ready), EmgStatus::Ok);
                if ready == 1 {
                    assert_eq!(out, frame);
                    got += 1;
                }
            }
        }
        assert_eq!(got, 3);
        assert_eq!(emg_frame_sync_push(h, 0, ptr::null_mut(), &mut ready), EmgStatus::NullPointer);
        assert_eq!(emg_frame_sync_push(ptr::null_mut(), 0, out.as_mut_ptr(), &mut ready), EmgStatus::NullPointer);
        emg_frame_sync_free(h);
        emg_frame_sync_free(ptr::null_mut());
    }
}

#[test]
fn notch_handle() {
    let mut h: *mut EmgNotch = ptr::null_mut();
    unsafe {
        assert_eq!(emg_notch_new(60.0, 2.0, 100.0, &mut h), EmgStatus::Config);
        assert!(h.is_null());
        assert_eq!(emg_notch_new(60.0, 2.0, 1000.0, &mut h), EmgStatus::Ok);
        let mut x: Vec<f64> = (0..4000)
            .map(|n| (2.0 * std::f64::consts::PI * 60.0 * n as f64 / 1000.0).sin())
            .collect();
        assert_eq!(emg_notch_process(h, x.as_mut_ptr(), x.len()), EmgStatus::Ok);
        let tail = x[3000..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(tail < 0.01, "{tail}");
        assert_eq!(emg_notch_process(h, ptr::null_mut(), 4), EmgStatus::NullPointer);
        emg_notch_free(h);
    }
}
