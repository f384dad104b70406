//! The 10-bit windowed wire protocol.
//!
//! Each channel's 24-bit conversion is reduced to a sign bit plus a 9-bit
//! magnitude taken from bits 6..=14 of the absolute value. Eight channels are
//! sent as one 11-byte frame:
//!
//! ```text
//! byte  0..=7   LSP: low 8 magnitude bits of channels 1..8
//! byte  8       MSP1: [s1 m8_1][s2 m8_2][s3 m8_3][s4 m8_4]   (ch1 in bits 7-6)
//! byte  9       MSP2: [s5 m8_5][s6 m8_6][s7 m8_7][s8 m8_8]   (ch5 in bits 7-6)
//! byte 10       0xFF end-of-message marker
//! ```
//!
//! The sign bit is 1 for positive and 0 for negative.

mod sync;

pub use sync::{FrameSync, SyncEvent, SyncStats, LOCK_THRESHOLD};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 8;
pub const FRAME_LEN: usize = 11;
pub const MARKER: u8 = 0xFF;

/// Right shift applied to the 24-bit magnitude before the 9-bit window.
pub const WINDOW_SHIFT: u32 = 6;
pub const MAX_MAGNITUDE: u16 = 511;

/// UART character cost: start bit, 8 data bits, stop bit.
pub const UART_BITS_PER_BYTE: u32 = 10;

/// One channel's two's-complement ADC conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Raw24Sample(i32);

impl Raw24Sample {
    pub const MIN: i32 = -(1 << 23);
    pub const MAX: i32 = (1 << 23) - 1;

    pub fn new(value: i32) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Range {
                value: value.into(),
                min: Self::MIN.into(),
                max: Self::MAX.into(),
            })
        }
    }

    /// Clamps into the 24-bit range.
    pub fn saturating(value: i64) -> Self {
        Self(value.clamp(Self::MIN.into(), Self::MAX.into()) as i32)
    }

    /// Sign-extends the low 24 bits of `word`.
    pub fn from_bits(word: u32) -> Self {
        Self(((word << 8) as i32) >> 8)
    }

    pub fn to_bits(self) -> u32 {
        (self.0 as u32) & 0x00FF_FFFF
    }

    pub fn value(self) -> i32 {
        self.0
    }
}

/// A 10-bit protocol word: sign bit plus 9-bit magnitude.
///
/// `(negative, 0)` is representable and decodes to zero, but the encoder only
/// ever produces the canonical positive zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowCode {
    positive: bool,
    magnitude: u16,
}

impl Default for WindowCode {
    fn default() -> Self {
        Self::ZERO
    }
}

impl WindowCode {
    pub const ZERO: WindowCode = WindowCode {
        positive: true,
        magnitude: 0,
    };

    pub fn new(positive: bool, magnitude: u16) -> Result<Self> {
        if magnitude > MAX_MAGNITUDE {
            return Err(Error::Range {
                value: magnitude.into(),
                min: 0,
                max: MAX_MAGNITUDE.into(),
            });
        }
        Ok(Self {
            positive,
            magnitude,
        })
    }

    /// Builds from the 10-bit word `[sign, m8..m0]`; upper bits are ignored.
    pub fn from_word(word: u16) -> Self {
        Self {
            positive: word & 0x200 != 0,
            magnitude: word & 0x1FF,
        }
    }

    pub fn word(self) -> u16 {
        (u16::from(self.positive) << 9) | self.magnitude
    }

    pub fn is_positive(self) -> bool {
        self.positive
    }

    pub fn sign_bit(self) -> u8 {
        u8::from(self.positive)
    }

    pub fn magnitude(self) -> u16 {
        self.magnitude
    }

    pub fn is_canonical(self) -> bool {
        self.magnitude != 0 || self.positive
    }

    /// Top two bits of the word, `[sign, m8]`, as they appear in an MSP.
    fn top_bits(self) -> u8 {
        (self.sign_bit() << 1) | ((self.magnitude >> 8) as u8 & 1)
    }

    fn from_parts(top: u8, low: u8) -> Self {
        Self {
            positive: top & 0b10 != 0,
            magnitude: (u16::from(top & 1) << 8) | u16::from(low),
        }
    }
}

/// Selects the 9-bit window from a 24-bit conversion.
///
/// Negative values are converted to sign-magnitude first, the magnitude is
/// truncated by 6 bits and values past the window saturate at 511.
pub fn encode_window(raw: Raw24Sample) -> WindowCode {
    let v = raw.value();
    let magnitude = (v.unsigned_abs() >> WINDOW_SHIFT).min(u32::from(MAX_MAGNITUDE)) as u16;
    WindowCode {
        positive: v >= 0,
        magnitude,
    }
}

pub fn decode_window(code: WindowCode) -> i16 {
    let m = code.magnitude as i16;
    if code.positive {
        m
    } else {
        -m
    }
}

/// One wire message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame([u8; FRAME_LEN]);

impl Frame {
    /// Wraps raw bytes, rejecting anything without the end marker.
    pub fn from_bytes(bytes: [u8; FRAME_LEN]) -> Result<Self> {
        match bytes[FRAME_LEN - 1] {
            MARKER => Ok(Self(bytes)),
            found => Err(Error::BadMarker { found }),
        }
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; FRAME_LEN] = bytes.try_into().map_err(|_| {
            Error::Format(format!("frame must be {FRAME_LEN} bytes, got {}", bytes.len()))
        })?;
        Self::from_bytes(arr)
    }

    pub fn as_bytes(&self) -> &[u8; FRAME_LEN] {
        &self.0
    }

    pub fn lsp(&self) -> &[u8] {
        &self.0[..CHANNELS]
    }

    pub fn msp(&self) -> [u8; 2] {
        [self.0[8], self.0[9]]
    }
}

impl AsRef<[u8]> for Frame {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

pub fn pack_frame(codes: &[WindowCode; CHANNELS]) -> Frame {
    let mut bytes = [0u8; FRAME_LEN];
    for (i, code) in codes.iter().enumerate() {
        bytes[i] = (code.magnitude & 0xFF) as u8;
        let shift = 6 - 2 * (i % 4);
        bytes[CHANNELS + i / 4] |= code.top_bits() << shift;
    }
    bytes[FRAME_LEN - 1] = MARKER;
    Frame(bytes)
}

pub fn unpack_frame(frame: &Frame) -> [WindowCode; CHANNELS] {
    let b = &frame.0;
    std::array::from_fn(|i| {
        let shift = 6 - 2 * (i % 4);
        let top = (b[CHANNELS + i / 4] >> shift) & 0b11;
        WindowCode::from_parts(top, b[i])
    })
}

/// Unpacks straight from the wire, validating the marker.
pub fn unpack_bytes(bytes: &[u8; FRAME_LEN]) -> Result<[WindowCode; CHANNELS]> {
    Frame::from_bytes(*bytes).map(|f| unpack_frame(&f))
}

/// Messages per second a link can carry: `baud / frame_bits`.
pub fn throughput(baud: f64, frame_bits: f64) -> Result<f64> {
    if !(baud > 0.0 && baud.is_finite()) {
        return Err(Error::Domain(format!("baud must be positive, got {baud}")));
    }
    if !(frame_bits > 0.0 && frame_bits.is_finite()) {
        return Err(Error::Domain(format!(
            "frame length must be positive, got {frame_bits}"
        )));
    }
    Ok(baud / frame_bits)
}

/// Bits on the wire for `bytes` UART characters.
pub fn uart_frame_bits(bytes: u32) -> u32 {
    bytes * UART_BITS_PER_BYTE
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(positive: bool, magnitude: u16) -> WindowCode {
        WindowCode::new(positive, magnitude).unwrap()
    }

    /// Reference window selection done bit by bit on the magnitude.
    fn window_oracle(raw: i32) -> (bool, u16) {
        let m = i64::from(raw).unsigned_abs();
        let above = (15..24).any(|b| m >> b & 1 == 1) || m >> 24 != 0;
        let mag = if above {
            511
        } else {
            (6..15).map(|b| (((m >> b) & 1) as u16) << (b - 6)).sum()
        };
        (raw >= 0, mag)
    }

    #[test]
    fn window_examples() {
        assert_eq!(encode_window(Raw24Sample::new(0).unwrap()), code(true, 0));
        assert_eq!(encode_window(Raw24Sample::new(64).unwrap()), code(true, 1));
        assert_eq!(encode_window(Raw24Sample::new(-32704).unwrap()), code(false, 511));
        assert_eq!(window_oracle(-32704), (false, 511));
        let max = Raw24Sample::new(Raw24Sample::MAX).unwrap();
        assert_eq!(encode_window(max), code(true, 511));
        assert!((Raw24Sample::MAX >> 6) > 511);
        assert_eq!(decode_window(encode_window(Raw24Sample::new(4096).unwrap())), 64);
    }

    #[test]
    fn window_matches_bit_oracle_on_boundaries() {
        for base in [0i32, 63, 64, 65, 16383, 16384, 32703, 32704, 32767, 32768, 1 << 22] {
            for v in [base, -base, base + 1, -base - 1] {
                let raw = Raw24Sample::new(v).unwrap();
                let c = encode_window(raw);
                assert_eq!((c.is_positive(), c.magnitude()), window_oracle(v), "raw {v}");
            }
        }
        let min = Raw24Sample::new(Raw24Sample::MIN).unwrap();
        assert_eq!(encode_window(min), code(false, 511));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_window(code(true, 0)), 0);
        assert_eq!(decode_window(code(false, 0)), 0);
        assert_eq!(decode_window(code(false, 511)), -511);
    }

    #[test]
    fn window_code_rejects_wide_magnitude() {
        assert!(WindowCode::new(true, 512).is_err());
        assert!(!code(false, 0).is_canonical());
        assert_eq!(WindowCode::from_word(code(false, 300).word()), code(false, 300));
    }

    #[test]
    fn raw_sign_extension() {
        assert_eq!(Raw24Sample::from_bits(0xFF_FFFF).value(), -1);
        assert_eq!(Raw24Sample::from_bits(0x80_0000).value(), Raw24Sample::MIN);
        assert_eq!(Raw24Sample::new(-5).unwrap().to_bits(), 0xFF_FFFB);
        assert!(Raw24Sample::new(1 << 23).is_err());
        assert_eq!(Raw24Sample::saturating(1 << 40).value(), Raw24Sample::MAX);
    }

    #[test]
    fn pack_examples() {
        let f = pack_frame(&[WindowCode::ZERO; CHANNELS]);
        assert_eq!(f.as_bytes(), &[0, 0, 0, 0, 0, 0, 0, 0, 0xAA, 0xAA, 0xFF]);
        assert_eq!(unpack_frame(&f), [WindowCode::ZERO; CHANNELS]);

        let neg = pack_frame(&[code(false, 0); CHANNELS]);
        assert_eq!(neg.as_bytes(), &[0, 0, 0, 0, 0, 0, 0, 0, 0x00, 0x00, 0xFF]);
    }

    #[test]
    fn msp_layout_is_msb_first_by_channel() {
        // Only channel 1 carries m8 (magnitude 256), only channel 8 is positive.
        let mut codes = [code(false, 0); CHANNELS];
        codes[0] = code(false, 256);
        codes[7] = code(true, 0x1F3);
        let f = pack_frame(&codes);
        assert_eq!(f.msp(), [0b0100_0000, 0b0000_0011]);
        assert_eq!(f.lsp()[7], 0xF3);
    }

    #[test]
    fn unpack_rejects_bad_marker() {
        let mut bytes = [0u8; FRAME_LEN];
        bytes[10] = 0xFE;
        assert!(matches!(unpack_bytes(&bytes), Err(Error::BadMarker { found: 0xFE })));
        bytes[8] = 0xAA;
        bytes[9] = 0xAA;
        bytes[10] = 0xFF;
        assert_eq!(unpack_bytes(&bytes).unwrap(), [WindowCode::ZERO; CHANNELS]);
        assert!(Frame::from_slice(&bytes[..10]).is_err());
    }

    #[test]
    fn all_ff_frame_is_full_scale_positive() {
        let f = Frame::from_bytes([0xFF; FRAME_LEN]).unwrap();
        assert_eq!(unpack_frame(&f), [code(true, 511); CHANNELS]);
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput(115200.0, 240.0).unwrap(), 480.0);
        assert!((throughput(115200.0, 110.0).unwrap() - 1047.27).abs() < 0.01);
        assert_eq!(throughput(115200.0, 115200.0).unwrap(), 1.0);
        assert_eq!(uart_frame_bits(FRAME_LEN as u32), 110);
        assert_eq!(uart_frame_bits(24), 240);
        assert!(throughput(0.0, 110.0).is_err());
        assert!(throughput(115200.0, -1.0).is_err());
        assert!(throughput(f64::NAN, 1.0).is_err());
    }
}
