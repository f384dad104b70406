//! Signal comparison metrics and spectra.

mod report;
mod validate;

pub use report::{Check, ValidationReport};
pub use validate::{
    gesture_spectrum, synthetic_reference, validate_replay, validate_sine, GestureSpectrum,
    SineValidation, MSE_BOUND_MV2,
};

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Shortest signal accepted by [`spectrum`].
pub const MIN_SPECTRUM_LEN: usize = 64;

/// Mean squared difference.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// `20 log10(in / out)`: positive when the output is smaller.
pub fn attenuation_db(in_peak: f64, out_peak: f64) -> Result<f64> {
    if !(in_peak > 0.0 && out_peak > 0.0) || !in_peak.is_finite() || !out_peak.is_finite() {
        return Err(Error::Domain(format!(
            "peaks must be positive and finite, got {in_peak} and {out_peak}"
        )));
    }
    Ok(20.0 * (in_peak / out_peak).log10())
}

pub fn peak_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            // Periodic Hann, so 50%-overlapped segments sum to a constant.
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" | "hanning" => Ok(Window::Hann),
            "rect" | "rectangular" | "none" => Ok(Window::Rectangular),
            _ => Err(Error::Config(format!("unknown window {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    /// Segment length; shorter signals use their own length.
    pub n_fft: usize,
    pub window: Window,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            window: Window::Hann,
        }
    }
}

/// One-sided power spectrum. `power` is scaled so that its sum estimates
/// the mean square of the input; a sine of amplitude A contributes A²/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub segments: usize,
}

/// Welch estimate with 50% overlapping segments.
pub fn spectrum(signal: &[f64], fs: f64, cfg: SpectrumConfig) -> Result<Spectrum> {
    if signal.len() < MIN_SPECTRUM_LEN {
        return Err(Error::TooShort {
            len: signal.len(),
            min: MIN_SPECTRUM_LEN,
        });
    }
    if !(fs > 0.0) || cfg.n_fft < 2 {
        return Err(Error::Domain("sample rate and FFT length must be positive".into()));
    }
    let n = cfg.n_fft.min(signal.len());
    let hop = (n / 2).max(1);
    let w = cfg.window.coefficients(n);
    let w_energy: f64 = w.iter().map(|c| c * c).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);

    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex64::default(); n];
    let mut segments = 0;
    let mut start = 0;
    while start + n <= signal.len() {
        for (b, (x, c)) in buf.iter_mut().zip(signal[start..start + n].iter().zip(&w)) {
            *b = Complex64::new(x * c, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let scale = 1.0 / (n as f64 * w_energy * segments as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    let freqs = (0..bins).map(|k| k as f64 * fs / n as f64).collect();
    Ok(Spectrum {
        freqs,
        power,
        segments,
    })
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Power in dB relative to one squared input unit.
    pub fn magnitude_db(&self) -> Vec<f64> {
        self.power
            .iter()
            .map(|p| 10.0 * p.max(1e-300).log10())
            .collect()
    }

    /// Bin index, frequency and power of the strongest bin.
    pub fn peak(&self) -> (usize, f64, f64) {
        let (k, p) = self
            .power
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best });
        (k, self.freqs[k], p)
    }

    /// Local maxima, strongest first.
    pub fn peaks(&self, count: usize) -> Vec<(f64, f64)> {
        let p = &self.power;
        let mut found: Vec<(f64, f64)> = (0..p.len())
            .filter(|&k| {
                let left = k == 0 || p[k] > p[k - 1];
                let right = k + 1 == p.len() || p[k] >= p[k + 1];
                left && right && p[k] > 0.0
            })
            .map(|k| (self.freqs[k], p[k]))
            .collect();
        found.sort_by(|a, b| b.1.total_cmp(&a.1));
        found.truncate(count);
        found
    }

    /// Power in `[lo, hi]` Hz.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p)
            .sum()
    }

    /// Share of total power strictly above `f` Hz.
    pub fn fraction_above(&self, f: f64) -> f64 {
        let total = self.total_power();
        if total <= 0.0 {
            return 0.0;
        }
        let above: f64 = self
            .freqs
            .iter()
            .zip(&self.power)
            .filter(|(fr, _)| **fr > f)
            .map(|(_, p)| p)
            .sum();
        above / total
    }

    /// Adds another spectrum with the same bins, e.g. another channel.
    pub fn accumulate(&mut self, other: &Spectrum) -> Result<()> {
        if self.freqs.len() != other.freqs.len() {
            return Err(Error::LengthMismatch {
                left: self.freqs.len(),
                right: other.freqs.len(),
            });
        }
        for (a, b) in self.power.iter_mut().zip(&other.power) {
            *a += b;
        }
        Ok(())
    }

    /// CSV with columns `freq_hz,magnitude_db`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "freq_hz,magnitude_db")?;
        for (f, db) in self.freqs.iter().zip(self.magnitude_db()) {
            writeln!(out, "{f:.6},{db:.6}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
