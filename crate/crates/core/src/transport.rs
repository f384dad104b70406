//! Byte transports between the device simulator and the host.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, SyncSender};

use crate::error::{Error, Result};

/// Where the device writes its frame stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportSpec {
    /// In-process pipe to a host session.
    Loopback,
    /// Connect to `host:port`.
    Tcp(String),
    Stdout,
}

impl FromStr for TransportSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loopback" => Ok(Self::Loopback),
            "stdout" | "-" => Ok(Self::Stdout),
            _ => match s.strip_prefix("tcp:") {
                Some(addr) if !addr.is_empty() => Ok(Self::Tcp(addr.to_owned())),
                _ => Err(Error::Config(format!(
                    "unknown transport {s:?} (expected loopback | tcp:HOST:PORT | stdout)"
                ))),
            },
        }
    }
}

impl fmt::Display for TransportSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Loopback => f.write_str("loopback"),
            Self::Tcp(a) => write!(f, "tcp:{a}"),
            Self::Stdout => f.write_str("stdout"),
        }
    }
}

/// Connects to a listening host with Nagle disabled so each frame leaves
/// immediately.
pub fn connect_tcp(addr: &str) -> Result<TcpStream> {
    let stream = TcpStream::connect(addr).map_err(Error::Transport)?;
    stream.set_nodelay(true).map_err(Error::Transport)?;
    Ok(stream)
}

/// Bounded in-memory byte pipe. The reader sees EOF once the writer is
/// dropped; the writer gets `BrokenPipe` once the reader is dropped.
pub fn loopback_pipe(capacity_chunks: usize) -> (LoopbackWriter, LoopbackReader) {
    let (tx, rx) = mpsc::sync_channel(capacity_chunks);
    (
        LoopbackWriter { tx },
        LoopbackReader {
            rx,
            chunk: Vec::new(),
            pos: 0,
        },
    )
}

pub struct LoopbackWriter {
    tx: SyncSender<Vec<u8>>,
}

impl Write for LoopbackWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "loopback reader closed"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub struct LoopbackReader {
    rx: Receiver<Vec<u8>>,
    chunk: Vec<u8>,
    pos: usize,
}

impl Read for LoopbackReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pos >= self.chunk.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.chunk = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.chunk.len() - self.pos);
        buf[..n].copy_from_slice(&self.chunk[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}
