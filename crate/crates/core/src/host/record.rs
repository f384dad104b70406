//! CSV recordings: `t_s,ch1_mV,...,ch8_mV`, one row per sample.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, SyncSender};
use std::thread::JoinHandle;

use super::ChannelBlock;
use crate::codec::CHANNELS;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t_s,ch1_mV,ch2_mV,ch3_mV,ch4_mV,ch5_mV,ch6_mV,ch7_mV,ch8_mV";

fn fmt_cell(v: f64) -> String {
    let s = format!("{v:.6}");
    match s.strip_prefix('-') {
        // Tiny negatives round to "-0.000000"; print them as zero.
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_owned(),
        _ => s,
    }
}

pub fn format_row(block: &ChannelBlock) -> String {
    let mut row = fmt_cell(block.t);
    for v in block.ch {
        row.push(',');
        row.push_str(&fmt_cell(v * 1e3));
    }
    row
}

/// Incremental writer; the file is created on the first block.
pub struct CsvRecorder {
    path: PathBuf,
    out: Option<BufWriter<File>>,
    rows: u64,
}

impl CsvRecorder {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            out: None,
            rows: 0,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn write_block(&mut self, block: &ChannelBlock) -> Result<()> {
        let out = match self.out.as_mut() {
            Some(out) => out,
            None => {
                let file = File::create(&self.path).map_err(|source| Error::File {
                    path: self.path.clone(),
                    source,
                })?;
                let mut w = BufWriter::new(file);
                writeln!(w, "{CSV_HEADER}")?;
                self.out.insert(w)
            }
        };
        writeln!(out, "{}", format_row(block))?;
        self.rows += 1;
        Ok(())
    }

    /// Flushes and reports whether a file was written.
    pub fn finish(mut self) -> Result<Option<PathBuf>> {
        match self.out.take() {
            Some(mut w) => {
                w.flush()?;
                Ok(Some(self.path))
            }
            None => Ok(None),
        }
    }
}

pub fn record_csv(blocks: &[ChannelBlock], path: &Path) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::EmptyRecording);
    }
    let mut rec = CsvRecorder::new(path);
    for b in blocks {
        rec.write_block(b)?;
    }
    rec.finish()?;
    Ok(())
}

/// Reads a recording written by [`record_csv`]. Sample indices are assigned
/// by row order.
pub fn read_csv(path: &Path) -> Result<Vec<ChannelBlock>> {
    let file = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(file)
}

pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<Vec<ChannelBlock>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != CHANNELS + 1 {
        return Err(Error::Format(format!(
            "expected {} columns, found {}",
            CHANNELS + 1,
            headers.len()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", i + 2)))?;
        out.push(ChannelBlock {
            index: i as u64,
            t: vals[0],
            ch: std::array::from_fn(|c| vals[c + 1] * 1e-3),
        });
    }
    Ok(out)
}

/// Background writer owning the recording file. Blocks are never dropped:
/// `push` blocks when the queue is full.
pub struct RecorderHandle {
    tx: Option<SyncSender<ChannelBlock>>,
    join: Option<JoinHandle<Result<(Vec<ChannelBlock>, Option<PathBuf>)>>>,
}

impl RecorderHandle {
    pub fn spawn(output: Option<PathBuf>, queue: usize) -> Self {
        let (tx, rx) = mpsc::sync_channel::<ChannelBlock>(queue);
        let join = std::thread::spawn(move || {
            let mut csv = output.map(CsvRecorder::new);
            let mut blocks = Vec::new();
            let mut err = None;
            for b in rx {
                if let (Some(w), None) = (csv.as_mut(), err.as_ref()) {
                    if let Err(e) = w.write_block(&b) {
                        err = Some(e);
                    }
                }
                blocks.push(b);
            }
            if let Some(e) = err {
                return Err(e);
            }
            let path = match csv {
                Some(w) => w.finish()?,
                None => None,
            };
            Ok((blocks, path))
        });
        Self {
            tx: Some(tx),
            join: Some(join),
        }
    }

    pub fn push(&self, block: ChannelBlock) {
        if let Some(tx) = &self.tx {
            // Only fails if the writer thread died; `finish` reports why.
            let _ = tx.send(block);
        }
    }

    /// Closes the queue and waits for the writer.
    pub fn finish(mut self) -> Result<(Vec<ChannelBlock>, Option<PathBuf>)> {
        self.tx.take();
        match self.join.take().map(JoinHandle::join) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(Error::Io(std::io::Error::other("recorder thread panicked"))),
            None => Ok((Vec::new(), None)),
        }
    }
}

impl Drop for RecorderHandle {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}
