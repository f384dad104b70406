use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use emgwire::analysis::{spectrum, SpectrumConfig, Window};
use emgwire::device::{run_device_with_mode, ClockMode, Device, DeviceConfig, SourceSpec};
use emgwire::host::bridge::{Bridge, BridgeConfig, BridgeMessage};
use emgwire::host::SessionConfig;
use emgwire::transport::loopback_pipe;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn start_bridge(session: SessionConfig, save_dir: &std::path::Path) -> (Bridge, String) {
    let bridge = Bridge::new(BridgeConfig {
        session,
        save_dir: save_dir.to_path_buf(),
        ..BridgeConfig::default()
    })
    .unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("ws://{}", listener.local_addr().unwrap());
    bridge.serve_ui(listener);
    (bridge, url)
}

/// Real-time device with 60 Hz pickup feeding the bridge.
fn stream_mains(bridge: &Bridge, seconds: f64) {
    let cfg = DeviceConfig {
        clock: ClockMode::RealTime,
        mains_amplitude: 1e-3,
        max_frames: Some((seconds * 1000.0) as u64),
        ..DeviceConfig::default()
    };
    let mut device = Device::from_spec(&cfg, &SourceSpec::zero()).unwrap();
    let (mut w, r) = loopback_pipe(64);
    std::thread::spawn(move || run_device_with_mode(&cfg, &mut device, &mut w, None));
    let b = bridge.clone();
    std::thread::spawn(move || b.feed(r));
}

fn connect(url: &str) -> Client {
    let (ws, _) = tungstenite::connect(url).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    }
    ws
}

fn send(ws: &mut Client, text: &str) {
    ws.send(Message::text(text)).unwrap();
}

fn recv(ws: &mut Client) -> BridgeMessage {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
            Message::Close(_) => panic!("closed"),
            _ => {}
        }
    }
}

/// Reads until a reply to `cmd` arrives, keeping sample batches seen meanwhile.
fn reply(ws: &mut Client, cmd: &str, samples: &mut Vec<(u64, [f64; 8])>) -> BridgeMessage {
    loop {
        match recv(ws) {
            BridgeMessage::Samples { index, mv } => {
                samples.extend(mv.into_iter().enumerate().map(|(k, s)| (index + k as u64, s)))
            }
            m @ BridgeMessage::Ack { .. } => {
                if matches!(&m, BridgeMessage::Ack { cmd: c, .. } if c == cmd) {
                    return m;
                }
            }
            m @ BridgeMessage::Error { .. } => return m,
            BridgeMessage::State { .. } => {}
        }
    }
}

fn tone_db(samples: &[(u64, [f64; 8])], from: u64, to: u64) -> f64 {
    let x: Vec<f64> = samples
        .iter()
        .filter(|(i, _)| (from..to).contains(i))
        .map(|(_, s)| s[0])
        .collect();
    assert_eq!(x.len() as u64, to - from, "samples missing in [{from}, {to})");
    let s = spectrum(&x, 1000.0, SpectrumConfig { n_fft: x.len(), window: Window::Hann }).unwrap();
    10.0 * s.band_power(59.0, 61.0).log10()
}

#[test]
fn notch_toggle_drops_mains_bin_within_one_second() {
    let dir = tempfile::tempdir().unwrap();
    let (bridge, url) = start_bridge(SessionConfig::default(), dir.path());
    stream_mains(&bridge, 6.0);
    let mut ws = connect(&url);
    let mut samples = Vec::new();

    send(&mut ws, r#"{"cmd":"start","duration_s":4}"#);
    let ack = reply(&mut ws, "start", &mut samples);
    assert!(matches!(ack, BridgeMessage::Ack { ref state, notch: false, .. } if state == "acquiring"), "{ack:?}");

    while samples.last().is_none_or(|(i, _)| *i < 1100) {
        if let BridgeMessage::Samples { index, mv } = recv(&mut ws) {
            samples.extend(mv.into_iter().enumerate().map(|(k, s)| (index + k as u64, s)));
        }
    }
    send(&mut ws, r#"{"cmd":"set_notch","on":true}"#);
    let ack = reply(&mut ws, "set_notch", &mut samples);
    assert!(matches!(ack, BridgeMessage::Ack { notch: true, .. }));
    // Every sample streamed after the ack was produced after the toggle.
    let toggled_at = samples.last().unwrap().0 + 1;

    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        assert!(Instant::now() < deadline);
        match recv(&mut ws) {
            BridgeMessage::Samples { index, mv } => {
                samples.extend(mv.into_iter().enumerate().map(|(k, s)| (index + k as u64, s)))
            }
            BridgeMessage::State { state, reason, samples: n, .. } if state == "stopped" => {
                assert_eq!(reason.as_deref(), Some("duration"));
                assert_eq!(n, 4000);
                break;
            }
            _ => {}
        }
    }
    let before = tone_db(&samples, toggled_at - 1000, toggled_at);
    let after = tone_db(&samples, toggled_at + 1000, toggled_at + 2000);
    assert!(before - after >= 20.0, "60 Hz bin {before:.1} dB -> {after:.1} dB");

    // The recording keeps the decoded, un-notched signal.
    let rec = bridge.last_recording();
    assert_eq!(rec.len(), 4000);
    let late: Vec<f64> = rec[3000..].iter().map(|b| b.ch[0]).collect();
    assert!(late.iter().fold(0.0f64, |m, v| m.max(v.abs())) > 0.9e-3);

    send(&mut ws, r#"{"cmd":"save"}"#);
    let ack = reply(&mut ws, "save", &mut samples);
    let BridgeMessage::Ack { path: Some(p), .. } = ack else {
        panic!("{ack:?}")
    };
    let saved = emgwire::host::read_csv(p.as_ref()).unwrap();
    assert_eq!(saved.len(), 4000);
    // Streamed values before the toggle equal the recording.
    for (i, s) in samples.iter().filter(|(i, _)| *i < toggled_at) {
        for (v, r) in s.iter().zip(saved[*i as usize].ch) {
            assert!((v - r * 1e3).abs() < 1e-6);
        }
    }
}

#[test]
fn busy_malformed_and_status_over_socket() {
    let dir = tempfile::tempdir().unwrap();
    let (bridge, url) = start_bridge(SessionConfig::default(), dir.path());
    stream_mains(&bridge, 2.0);
    let mut ws = connect(&url);
    let mut samples = Vec::new();

    send(&mut ws, r#"{"cmd":"start","duration_s":6}"#);
    assert!(matches!(reply(&mut ws, "start", &mut samples), BridgeMessage::Ack { .. }));
    send(&mut ws, r#"{"cmd":"start"}"#);
    let m = reply(&mut ws, "start", &mut samples);
    assert!(matches!(m, BridgeMessage::Error { ref message, .. } if message == "busy"), "{m:?}");
    send(&mut ws, "not json");
    assert!(matches!(reply(&mut ws, "-", &mut samples), BridgeMessage::Error { cmd: None, .. }));
    send(&mut ws, r#"{"cmd":"status"}"#);
    let m = reply(&mut ws, "status", &mut samples);
    assert!(matches!(m, BridgeMessage::Ack { ref state, .. } if state == "acquiring"));
    std::thread::sleep(Duration::from_millis(200));
    send(&mut ws, r#"{"cmd":"stop"}"#);
    let m = reply(&mut ws, "stop", &mut samples);
    assert!(matches!(m, BridgeMessage::Ack { ref state, .. } if state == "idle"));
    assert!(!bridge.last_recording().is_empty());
    ws.close(None).unwrap();
}

#[test]
fn stalled_client_does_not_affect_recording() {
    let dir = tempfile::tempdir().unwrap();
    let (bridge, url) = start_bridge(
        SessionConfig {
            duration_s: 1.0,
            ..SessionConfig::default()
        },
        dir.path(),
    );
    // Connected but never read from.
    let _stalled = connect(&url);
    let mut ws = connect(&url);
    let mut samples = Vec::new();
    send(&mut ws, r#"{"cmd":"start"}"#);
    reply(&mut ws, "start", &mut samples);

    let cfg = DeviceConfig {
        clock: ClockMode::Virtual,
        mains_amplitude: 1e-3,
        max_frames: Some(1500),
        ..DeviceConfig::default()
    };
    let mut device = Device::from_spec(&cfg, &SourceSpec::zero()).unwrap();
    let (mut w, r) = loopback_pipe(64);
    let t = std::thread::spawn(move || run_device_with_mode(&cfg, &mut device, &mut w, None));
    bridge.feed(r).unwrap();
    t.join().unwrap();

    let rec = bridge.last_recording();
    assert_eq!(rec.len(), 1000);
    assert!(rec.iter().enumerate().all(|(i, b)| b.index == i as u64));
}
