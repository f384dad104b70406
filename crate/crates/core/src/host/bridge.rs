//! Live control/stream endpoint for an operator panel.
//!
//! Clients connect over WebSocket and exchange UTF-8 JSON text messages, one
//! object per message. See `docs/bridge-protocol.md` for the schema.
//!
//! The device stream is read continuously; samples are only recorded and
//! streamed while a session is acquiring. Each client has a bounded outbound
//! queue and broadcast messages are dropped for a client whose queue is
//! full, so a stalled panel never holds up decoding or recording.

use std::io::{ErrorKind, Read};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::{
    record_csv, Acquisition, ChannelBlock, DecodeEvent, Decoder, LiveBatch, RecorderHandle,
    SessionConfig, SessionState, StopReason,
};
use crate::error::Result;
use crate::signal_chain::Sample8;

/// Inbound command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum BridgeCommand {
    Start {
        #[serde(default)]
        duration_s: Option<f64>,
    },
    Stop,
    SetNotch {
        on: bool,
    },
    Status,
    Save {
        #[serde(default)]
        path: Option<PathBuf>,
    },
}

impl BridgeCommand {
    fn name(&self) -> &'static str {
        match self {
            BridgeCommand::Start { .. } => "start",
            BridgeCommand::Stop => "stop",
            BridgeCommand::SetNotch { .. } => "set_notch",
            BridgeCommand::Status => "status",
            BridgeCommand::Save { .. } => "save",
        }
    }
}

/// Outbound message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BridgeMessage {
    Ack {
        cmd: String,
        state: String,
        notch: bool,
        duration_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cmd: Option<String>,
        message: String,
    },
    State {
        state: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        samples: u64,
        notch: bool,
    },
    Samples {
        index: u64,
        mv: Vec<Sample8>,
    },
}

impl BridgeMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bridge messages always serialize")
    }
}

impl From<LiveBatch> for BridgeMessage {
    fn from(b: LiveBatch) -> Self {
        BridgeMessage::Samples {
            index: b.index,
            mv: b.mv,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    /// Defaults for each session; `duration_s` may be overridden by `start`.
    pub session: SessionConfig,
    /// Where `save` without a path writes.
    pub save_dir: PathBuf,
    pub client_queue: usize,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            save_dir: PathBuf::from("."),
            client_queue: 256,
        }
    }
}

struct Inner {
    cfg: BridgeConfig,
    state: SessionState,
    notch: bool,
    duration_s: f64,
    acq: Option<Acquisition>,
    recorder: Option<RecorderHandle>,
    last_recording: Vec<ChannelBlock>,
    saves: u32,
}

impl Inner {
    fn samples(&self) -> u64 {
        self.acq.as_ref().map_or(self.last_recording.len() as u64, Acquisition::samples)
    }

    fn state_message(&self) -> BridgeMessage {
        BridgeMessage::State {
            state: self.state.name().into(),
            reason: match &self.state {
                SessionState::Stopped(r) => Some(r.to_string()),
                _ => None,
            },
            samples: self.samples(),
            notch: self.notch,
        }
    }

    fn ack(&self, cmd: &str, path: Option<String>) -> BridgeMessage {
        BridgeMessage::Ack {
            cmd: cmd.into(),
            state: self.state.name().into(),
            notch: self.notch,
            duration_s: self.duration_s,
            path,
        }
    }

    /// Ends the running session and keeps its recording for `save`. Returns
    /// the final partial live batch, if any.
    fn end_session(&mut self, reason: StopReason) -> Result<Option<LiveBatch>> {
        if self.state.finish(reason.clone()).is_err() {
            return Ok(None);
        }
        let tail = self.acq.take().and_then(|mut a| a.take_batch());
        info!("session ended: {reason}");
        if let Some(rec) = self.recorder.take() {
            let (blocks, path) = rec.finish()?;
            if let Some(p) = path {
                info!("recording written to {}", p.display());
            }
            self.last_recording = blocks;
        }
        Ok(tail)
    }
}

/// Shared host state behind the panel endpoint.
#[derive(Clone)]
pub struct Bridge {
    inner: Arc<Mutex<Inner>>,
    clients: Arc<Mutex<Vec<SyncSender<String>>>>,
}

impl Bridge {
    pub fn new(cfg: BridgeConfig) -> Result<Self> {
        cfg.session.validate()?;
        let duration_s = cfg.session.duration_s;
        let notch = cfg.session.notch_enabled;
        Ok(Self {
            inner: Arc::new(Mutex::new(Inner {
                cfg,
                state: SessionState::Idle,
                notch,
                duration_s,
                acq: None,
                recorder: None,
                last_recording: Vec::new(),
                saves: 0,
            })),
            clients: Arc::new(Mutex::new(Vec::new())),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn state_name(&self) -> &'static str {
        self.lock().state.name()
    }

    pub fn notch_enabled(&self) -> bool {
        self.lock().notch
    }

    /// Recording of the last finished session.
    pub fn last_recording(&self) -> Vec<ChannelBlock> {
        self.lock().last_recording.clone()
    }

    /// Registers a broadcast listener with a bounded queue.
    pub fn subscribe(&self) -> Receiver<String> {
        let cap = self.lock().cfg.client_queue;
        let (tx, rx) = mpsc::sync_channel(cap);
        self.clients
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(tx);
        rx
    }

    pub fn broadcast(&self, msg: &BridgeMessage) {
        let text = msg.to_json();
        let mut clients = self.clients.lock().unwrap_or_else(|p| p.into_inner());
        clients.retain(|tx| match tx.try_send(text.clone()) {
            Ok(()) | Err(TrySendError::Full(_)) => true,
            Err(TrySendError::Disconnected(_)) => false,
        });
    }

    /// Parses and executes one text message, returning the direct replies.
    pub fn handle_text(&self, text: &str) -> Vec<BridgeMessage> {
        match serde_json::from_str::<BridgeCommand>(text) {
            Ok(cmd) => self.handle(cmd),
            Err(e) => vec![BridgeMessage::Error {
                cmd: None,
                message: format!("malformed command: {e}"),
            }],
        }
    }

    pub fn handle(&self, cmd: BridgeCommand) -> Vec<BridgeMessage> {
        let name = cmd.name();
        let error = |message: String| {
            vec![BridgeMessage::Error {
                cmd: Some(name.into()),
                message,
            }]
        };
        let mut inner = self.lock();
        match cmd {
            BridgeCommand::Start { duration_s } => {
                if inner.state.is_acquiring() {
                    return error("busy".into());
                }
                let mut session = inner.cfg.session.clone();
                if let Some(d) = duration_s {
                    session.duration_s = d;
                }
                let acq = match Acquisition::new(&session) {
                    Ok(a) => a,
                    Err(e) => return error(e.to_string()),
                };
                inner.state.start().expect("checked not acquiring");
                inner.duration_s = session.duration_s;
                inner.acq = Some(acq);
                inner.recorder = Some(RecorderHandle::spawn(session.output.clone(), 1024));
                let state = inner.state_message();
                let ack = inner.ack(name, None);
                drop(inner);
                self.broadcast(&state);
                vec![ack]
            }
            BridgeCommand::Stop => {
                if !inner.state.is_acquiring() {
                    return error("not acquiring".into());
                }
                let tail = match inner.end_session(StopReason::Command) {
                    Ok(t) => t,
                    Err(e) => return error(e.to_string()),
                };
                let state = inner.state_message();
                let ack = inner.ack(name, None);
                drop(inner);
                if let Some(t) = tail {
                    self.broadcast(&t.into());
                }
                self.broadcast(&state);
                vec![ack]
            }
            BridgeCommand::SetNotch { on } => {
                inner.notch = on;
                vec![inner.ack(name, None)]
            }
            BridgeCommand::Status => vec![inner.ack(name, None), inner.state_message()],
            BridgeCommand::Save { path } => {
                if inner.last_recording.is_empty() {
                    return error("nothing to save".into());
                }
                let path = match path.or_else(|| inner.cfg.session.output.clone()) {
                    Some(p) => p,
                    None => {
                        inner.saves += 1;
                        inner.cfg.save_dir.join(format!("recording-{}.csv", inner.saves))
                    }
                };
                match record_csv(&inner.last_recording, &path) {
                    Ok(()) => vec![inner.ack(name, Some(path.display().to_string()))],
                    Err(e) => error(e.to_string()),
                }
            }
        }
    }

    /// Feeds one decoded sample; recorded and streamed only while acquiring.
    pub fn ingest(&self, volts: Sample8) {
        let mut inner = self.lock();
        let notch = inner.notch;
        let Some(acq) = inner.acq.as_mut() else {
            return;
        };
        let out = acq.ingest(volts, notch);
        let complete = acq.is_complete();
        if let SessionState::Acquiring { samples, .. } = &mut inner.state {
            *samples += 1;
        }
        if let Some(rec) = inner.recorder.as_ref() {
            rec.push(out.recorded);
        }
        let mut msgs: Vec<BridgeMessage> = out.batch.into_iter().map(Into::into).collect();
        if complete {
            match inner.end_session(StopReason::Duration) {
                Ok(tail) => msgs.extend(tail.map(Into::into)),
                Err(e) => warn!("recorder failed: {e}"),
            }
            msgs.push(inner.state_message());
        }
        drop(inner);
        for m in &msgs {
            self.broadcast(m);
        }
    }

    /// Ends a running session because of a stream problem.
    pub fn abort(&self, reason: StopReason) {
        let mut inner = self.lock();
        if !inner.state.is_acquiring() {
            return;
        }
        let mut msgs: Vec<BridgeMessage> = Vec::new();
        match inner.end_session(reason) {
            Ok(tail) => msgs.extend(tail.map(Into::into)),
            Err(e) => warn!("recorder failed: {e}"),
        }
        msgs.push(inner.state_message());
        drop(inner);
        for m in &msgs {
            self.broadcast(m);
        }
    }

    /// Decodes a device stream until it ends.
    pub fn feed<R: Read>(&self, mut reader: R) -> Result<()> {
        let timeout = self.lock().cfg.session.sync_timeout_bytes();
        let mut decoder = Decoder::new();
        let mut buf = [0u8; 4096];
        loop {
            let n = match reader.read(&mut buf) {
                Ok(0) => {
                    self.abort(StopReason::EndOfStream);
                    return Ok(());
                }
                Ok(n) => n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.abort(StopReason::Transport(e.to_string()));
                    return Err(crate::Error::Transport(e));
                }
            };
            for &b in &buf[..n] {
                match decoder.push(b) {
                    DecodeEvent::Sample(v) => self.ingest(v),
                    _ if !decoder.sync().is_locked() && decoder.sync().unlocked_run() > timeout => {
                        self.abort(StopReason::SyncLost);
                    }
                    _ => {}
                }
            }
        }
    }

    /// Accepts device connections one after another and feeds each.
    pub fn serve_device(&self, listener: TcpListener) -> JoinHandle<()> {
        let bridge = self.clone();
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                match conn {
                    Ok(stream) => {
                        info!("device connected from {:?}", stream.peer_addr().ok());
                        if let Err(e) = bridge.feed(stream) {
                            warn!("device stream: {e}");
                        }
                    }
                    Err(e) => warn!("device accept failed: {e}"),
                }
            }
        })
    }

    /// Accepts panel clients, one thread each.
    pub fn serve_ui(&self, listener: TcpListener) -> JoinHandle<()> {
        let bridge = self.clone();
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                match conn {
                    Ok(stream) => {
                        let b = bridge.clone();
                        std::thread::spawn(move || {
                            if let Err(e) = b.client_loop(stream) {
                                debug!("panel client closed: {e}");
                            }
                        });
                    }
                    Err(e) => warn!("panel accept failed: {e}"),
                }
            }
        })
    }

    fn client_loop(&self, stream: TcpStream) -> std::result::Result<(), tungstenite::Error> {
        use tungstenite::Message;

        let mut ws = tungstenite::accept(stream).map_err(|e| match e {
            tungstenite::HandshakeError::Failure(e) => e,
            tungstenite::HandshakeError::Interrupted(_) => {
                tungstenite::Error::Io(std::io::Error::other("handshake interrupted"))
            }
        })?;
        ws.get_mut().set_read_timeout(Some(Duration::from_millis(10)))?;
        ws.get_mut().set_nodelay(true)?;
        let rx = self.subscribe();
        loop {
            match ws.read() {
                Ok(Message::Text(t)) => {
                    for reply in self.handle_text(t.as_str()) {
                        ws.send(Message::text(reply.to_json()))?;
                    }
                }
                Ok(Message::Close(_)) => return Ok(()),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => return Err(e),
            }
            for msg in rx.try_iter() {
                ws.send(Message::text(msg))?;
            }
        }
    }
}
