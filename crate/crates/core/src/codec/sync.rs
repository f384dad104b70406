//! Frame boundary recovery for an unaligned byte stream.
//!
//! LSP and MSP bytes may legitimately be 0xFF, so a single marker is not
//! proof of alignment. While searching, each of the 11 byte phases keeps a
//! count of consecutive 0xFF hits; the first phase to reach
//! [`LOCK_THRESHOLD`] wins and the frame ending at that byte is emitted. Once
//! locked, every 11th byte must be the marker or the lock is dropped and the
//! search restarts from the offending frame's bytes.

use super::{Frame, FRAME_LEN, MARKER};

pub const LOCK_THRESHOLD: u8 = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SyncStats {
    pub bytes_in: u64,
    pub frames: u64,
    pub locks: u64,
    /// Times an established lock was dropped on a bad marker.
    pub losses: u64,
}

/// Outcome of feeding one byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncEvent {
    Pending,
    /// A frame completed; `relocked` is set on the first frame after a search.
    Frame { frame: Frame, relocked: bool },
    /// The locked phase saw a bad marker.
    Lost,
}

#[derive(Debug, Clone)]
pub struct FrameSync {
    scores: [u8; FRAME_LEN],
    // Last FRAME_LEN bytes seen while searching, as a ring indexed by phase.
    recent: [u8; FRAME_LEN],
    search_pos: usize,
    locked: bool,
    buf: [u8; FRAME_LEN],
    fill: usize,
    unlocked_run: usize,
    stats: SyncStats,
}

impl Default for FrameSync {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameSync {
    pub fn new() -> Self {
        Self {
            scores: [0; FRAME_LEN],
            recent: [0; FRAME_LEN],
            search_pos: 0,
            locked: false,
            buf: [0; FRAME_LEN],
            fill: 0,
            unlocked_run: 0,
            stats: SyncStats::default(),
        }
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    pub fn stats(&self) -> SyncStats {
        self.stats
    }

    /// Bytes consumed since the last lock was acquired or lost without
    /// producing a frame.
    pub fn unlocked_run(&self) -> usize {
        self.unlocked_run
    }

    /// Candidate phase scores, indexed by stream position modulo 11.
    pub fn scores(&self) -> &[u8; FRAME_LEN] {
        &self.scores
    }

    /// Bytes currently held back waiting for a frame to complete.
    pub fn buffered(&self) -> usize {
        if self.locked {
            self.fill
        } else {
            self.search_pos.min(FRAME_LEN)
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new();
    }

    pub fn push(&mut self, byte: u8) -> Option<Frame> {
        match self.push_event(byte) {
            SyncEvent::Frame { frame, .. } => Some(frame),
            _ => None,
        }
    }

    pub fn push_event(&mut self, byte: u8) -> SyncEvent {
        self.stats.bytes_in += 1;
        if self.locked {
            self.push_locked(byte)
        } else {
            self.unlocked_run += 1;
            match self.search(byte) {
                Some(frame) => SyncEvent::Frame {
                    frame,
                    relocked: true,
                },
                None => SyncEvent::Pending,
            }
        }
    }

    /// Feeds a slice, collecting completed frames into `out`.
    pub fn extend(&mut self, bytes: &[u8], out: &mut Vec<Frame>) {
        out.extend(bytes.iter().filter_map(|&b| self.push(b)));
    }

    fn push_locked(&mut self, byte: u8) -> SyncEvent {
        self.buf[self.fill] = byte;
        self.fill += 1;
        if self.fill < FRAME_LEN {
            return SyncEvent::Pending;
        }
        self.fill = 0;
        if self.buf[FRAME_LEN - 1] == MARKER {
            self.stats.frames += 1;
            return SyncEvent::Frame {
                frame: Frame(self.buf),
                relocked: false,
            };
        }

        self.locked = false;
        self.stats.losses += 1;
        self.scores = [0; FRAME_LEN];
        self.search_pos = 0;
        self.unlocked_run = FRAME_LEN;
        let replay = self.buf;
        for b in replay {
            // Each phase gets at most one hit from a single frame, so this
            // can never reach the threshold.
            let _ = self.search(b);
        }
        SyncEvent::Lost
    }

    fn search(&mut self, byte: u8) -> Option<Frame> {
        let phase = self.search_pos % FRAME_LEN;
        self.recent[phase] = byte;
        self.search_pos += 1;
        if byte == MARKER {
            self.scores[phase] = self.scores[phase].saturating_add(1);
        } else {
            self.scores[phase] = 0;
        }
        if self.scores[phase] < LOCK_THRESHOLD {
            return None;
        }

        // Oldest byte in the ring sits just after the current phase.
        let frame: [u8; FRAME_LEN] =
            std::array::from_fn(|i| self.recent[(phase + 1 + i) % FRAME_LEN]);
        self.locked = true;
        self.fill = 0;
        self.scores = [0; FRAME_LEN];
        self.search_pos = 0;
        self.unlocked_run = 0;
        self.stats.locks += 1;
        self.stats.frames += 1;
        Some(Frame(frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{pack_frame, unpack_frame, WindowCode, CHANNELS};

    fn frames(n: usize) -> Vec<Frame> {
        (0..n)
            .map(|k| {
                let codes: [WindowCode; CHANNELS] = std::array::from_fn(|c| {
                    WindowCode::new(c % 2 == 0, ((k * 37 + c * 11) % 500) as u16).unwrap()
                });
                pack_frame(&codes)
            })
            .collect()
    }

    fn stream(fs: &[Frame]) -> Vec<u8> {
        fs.iter().flat_map(|f| f.as_bytes().iter().copied()).collect()
    }

    #[test]
    fn locks_on_third_clean_frame() {
        let fs = frames(3);
        let mut sync = FrameSync::new();
        let mut out = Vec::new();
        for (i, b) in stream(&fs).into_iter().enumerate() {
            if let Some(f) = sync.push(b) {
                out.push((i, f));
            }
        }
        assert_eq!(out, vec![(32, fs[2])]);
        assert!(sync.is_locked());
        assert_eq!(sync.stats().locks, 1);
    }

    #[test]
    fn garbage_prefix_gives_same_frames() {
        let fs = frames(8);
        let mut bytes = vec![0x13, 0x00, 0x7F, 0xFE, 0x42];
        bytes.extend(stream(&fs));
        let mut sync = FrameSync::new();
        let mut out = Vec::new();
        sync.extend(&bytes, &mut out);
        assert_eq!(out, fs[2..].to_vec());
    }

    #[test]
    fn all_ff_stream_locks_at_phase_zero() {
        let mut sync = FrameSync::new();
        let mut first = None;
        for i in 0..100 {
            if let Some(f) = sync.push(0xFF) {
                first.get_or_insert((i, f));
            }
        }
        let (at, frame) = first.unwrap();
        assert_eq!(at, 22);
        let full = WindowCode::new(true, 511).unwrap();
        assert_eq!(unpack_frame(&frame), [full; CHANNELS]);
    }

    #[test]
    fn corrupted_marker_drops_and_recovers() {
        let fs = frames(12);
        let mut bytes = stream(&fs);
        bytes[5 * FRAME_LEN + 10] = 0x00;
        let mut sync = FrameSync::new();
        let mut events = Vec::new();
        for b in bytes {
            match sync.push_event(b) {
                SyncEvent::Pending => {}
                e => events.push(e),
            }
        }
        assert!(events.contains(&SyncEvent::Lost));
        let got: Vec<Frame> = events
            .iter()
            .filter_map(|e| match e {
                SyncEvent::Frame { frame, .. } => Some(*frame),
                _ => None,
            })
            .collect();
        // Frames 0,1 lost to the initial search, 5 is corrupt, 6,7 rebuild the lock.
        let expected: Vec<Frame> = [2, 3, 4, 8, 9, 10, 11].iter().map(|&i| fs[i]).collect();
        assert_eq!(got, expected);
        assert_eq!(sync.stats().losses, 1);
        assert_eq!(sync.stats().locks, 2);
    }

    #[test]
    fn buffer_stays_bounded() {
        let mut sync = FrameSync::new();
        for i in 0..5000u32 {
            sync.push((i.wrapping_mul(2654435761) >> 24) as u8);
            assert!(sync.buffered() <= 2 * FRAME_LEN);
        }
    }
}
