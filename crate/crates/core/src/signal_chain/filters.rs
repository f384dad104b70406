use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// A single-channel recursive filter with internal state.
pub trait Filter {
    fn process(&mut self, x: f64) -> f64;

    /// Zeroes all internal state.
    fn reset(&mut self);

    fn apply(&mut self, samples: &mut [f64]) {
        for x in samples {
            *x = self.process(*x);
        }
    }
}

/// First-order section `(b0 + b1 z^-1) / (1 + a1 z^-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrder {
    pub b0: f64,
    pub b1: f64,
    pub a1: f64,
    x1: f64,
    y1: f64,
}

impl FirstOrder {
    pub fn new(b0: f64, b1: f64, a1: f64) -> Self {
        Self {
            b0,
            b1,
            a1,
            x1: 0.0,
            y1: 0.0,
        }
    }

    /// Bilinear transform of `s / (s + wc)`, prewarped so the digital -3 dB
    /// point lands exactly on `fc`.
    pub fn highpass(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        let norm = 1.0 / (1.0 + k);
        Self::new(norm, -norm, (k - 1.0) * norm)
    }

    /// Bilinear transform of `wc / (s + wc)`, prewarped at `fc`.
    pub fn lowpass(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        let norm = 1.0 / (1.0 + k);
        Self::new(k * norm, k * norm, (k - 1.0) * norm)
    }

    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
        (self.b0 + self.b1 * z1) / (1.0 + self.a1 * z1)
    }
}

impl Filter for FirstOrder {
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 - self.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }

    fn reset(&mut self) {
        self.x1 = 0.0;
        self.y1 = 0.0;
    }
}

/// Second-order section, normalised so `a0 = 1`, run in transposed direct
/// form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self {
            b,
            a,
            s1: 0.0,
            s2: 0.0,
        }
    }

    /// Butterworth (Q = 1/sqrt 2) low-pass via the bilinear transform.
    pub fn butterworth_lowpass(fc: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let alpha = w0.sin() / 2f64.sqrt();
        let cw = w0.cos();
        let a0 = 1.0 + alpha;
        Self::new(
            [(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0],
            [-2.0 * cw / a0, (1.0 - alpha) / a0],
        )
    }

    pub fn butterworth_highpass(fc: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let alpha = w0.sin() / 2f64.sqrt();
        let cw = w0.cos();
        let a0 = 1.0 + alpha;
        Self::new(
            [(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0],
            [-2.0 * cw / a0, (1.0 - alpha) / a0],
        )
    }

    /// Notch with zeros on the unit circle at `f0` and an exact -3 dB width
    /// of `bw` Hz. Unity gain at DC and Nyquist.
    pub fn notch(f0: f64, bw: f64, fs: f64) -> Self {
        let t = (PI * bw / fs).tan();
        let k = (1.0 - t) / (1.0 + t);
        let c = (2.0 * PI * f0 / fs).cos();
        let g = (1.0 + k) / 2.0;
        Self::new([g, -2.0 * g * c, g], [-(1.0 + k) * c, k])
    }

    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }
}

impl Filter for Biquad {
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[0] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[1] * y;
        y
    }

    fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }
}

/// RC band-pass of the electrode front end: first-order high-pass followed
/// by first-order low-pass, stages assumed ideally buffered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPassSpec {
    pub f_hp: f64,
    pub f_lp: f64,
}

impl Default for BandPassSpec {
    fn default() -> Self {
        Self {
            f_hp: 7.234,
            f_lp: 338.627,
        }
    }
}

impl BandPassSpec {
    /// Minimum simulation rate as a multiple of the low-pass cutoff.
    pub const MIN_OVERSAMPLE: f64 = 4.0;

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.f_hp > 0.0 && self.f_hp < self.f_lp && self.f_lp < fs / 2.0) {
            return Err(Error::Config(format!(
                "band-pass needs 0 < f_hp < f_lp < fs/2 (f_hp={}, f_lp={}, fs={fs})",
                self.f_hp, self.f_lp
            )));
        }
        if fs < Self::MIN_OVERSAMPLE * self.f_lp {
            return Err(Error::Config(format!(
                "band-pass rate {fs} Hz is below {} x f_lp",
                Self::MIN_OVERSAMPLE
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPass {
    spec: BandPassSpec,
    fs: f64,
    hp: FirstOrder,
    lp: FirstOrder,
}

impl BandPass {
    pub fn new(spec: BandPassSpec, fs: f64) -> Result<Self> {
        spec.validate(fs)?;
        Ok(Self {
            spec,
            fs,
            hp: FirstOrder::highpass(spec.f_hp, fs),
            lp: FirstOrder::lowpass(spec.f_lp, fs),
        })
    }

    pub fn spec(&self) -> BandPassSpec {
        self.spec
    }

    pub fn sample_rate(&self) -> f64 {
        self.fs
    }

    /// Digital frequency response of the realised filter.
    pub fn response(&self, f: f64) -> Complex64 {
        self.hp.response(f, self.fs) * self.lp.response(f, self.fs)
    }
}

impl Filter for BandPass {
    fn process(&mut self, x: f64) -> f64 {
        self.lp.process(self.hp.process(x))
    }

    fn reset(&mut self) {
        self.hp.reset();
        self.lp.reset();
    }
}

/// Host-side mains notch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotchSpec {
    pub f0: f64,
    /// -3 dB width in Hz.
    pub bandwidth: f64,
}

impl Default for NotchSpec {
    fn default() -> Self {
        Self {
            f0: 60.0,
            bandwidth: 2.0,
        }
    }
}

impl NotchSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        let lo = self.f0 - self.bandwidth / 2.0;
        let hi = self.f0 + self.bandwidth / 2.0;
        if !(self.bandwidth > 0.0 && lo > 0.0 && hi < fs / 2.0) {
            return Err(Error::Config(format!(
                "notch {} Hz / {} Hz does not fit below fs/2 = {} Hz",
                self.f0,
                self.bandwidth,
                fs / 2.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Notch {
    spec: NotchSpec,
    fs: f64,
    section: Biquad,
}

impl Notch {
    pub fn new(spec: NotchSpec, fs: f64) -> Result<Self> {
        spec.validate(fs)?;
        Ok(Self {
            spec,
            fs,
            section: Biquad::notch(spec.f0, spec.bandwidth, fs),
        })
    }

    pub fn spec(&self) -> NotchSpec {
        self.spec
    }

    pub fn response(&self, f: f64) -> Complex64 {
        self.section.response(f, self.fs)
    }
}

impl Filter for Notch {
    fn process(&mut self, x: f64) -> f64 {
        self.section.process(x)
    }

    fn reset(&mut self) {
        self.section.reset();
    }
}
