//! Analog and mixed-signal model of the acquisition front end.

mod filters;

pub use filters::{BandPass, BandPassSpec, Biquad, Filter, FirstOrder, Notch, NotchSpec};

use rand::Rng;

use crate::codec::{Raw24Sample, CHANNELS, MAX_MAGNITUDE, WINDOW_SHIFT};
use crate::error::{Error, Result};

/// Eight simultaneous channel values, in volts unless stated otherwise.
pub type Sample8 = [f64; CHANNELS];

/// Internal reference of the front end in volts.
pub const VREF: f64 = 4.5;

/// ADC volts per count: 4.5 V / 2^23.
pub const ADC_LSB_VOLTS: f64 = VREF / (1u32 << 23) as f64;

/// Volts per step of the 9-bit protocol window (64 ADC counts).
pub const WINDOW_STEP_VOLTS: f64 = ADC_LSB_VOLTS * (1u32 << WINDOW_SHIFT) as f64;

/// Largest magnitude representable by the window, in volts.
pub const WINDOW_FULL_SCALE_VOLTS: f64 = WINDOW_STEP_VOLTS * MAX_MAGNITUDE as f64;

/// Front-end converter configuration. Only PGA gain 1 with the internal
/// 4.5 V reference is modelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcSpec {
    pub vref: f64,
    pub bits: u32,
    pub pga: f64,
}

impl Default for AdcSpec {
    fn default() -> Self {
        Self {
            vref: VREF,
            bits: 24,
            pga: 1.0,
        }
    }
}

impl AdcSpec {
    pub fn lsb(&self) -> f64 {
        self.vref / self.pga / (1u64 << (self.bits - 1)) as f64
    }

    pub fn full_scale(&self) -> f64 {
        self.vref / self.pga
    }
}

/// Ideal converter: round to nearest count, clamp to 24 bits.
pub fn adc_quantize(spec: &AdcSpec, v: f64) -> Raw24Sample {
    let counts = (v / spec.lsb()).round();
    if counts.is_nan() {
        return Raw24Sample::default();
    }
    // f64 -> i64 saturates, then clamp to the 24-bit range.
    Raw24Sample::saturating(counts as i64)
}

/// Volts for a decoded window value in [-511, 511].
pub fn code_to_volts(code: i32) -> Result<f64> {
    let max = i32::from(MAX_MAGNITUDE);
    if !(-max..=max).contains(&code) {
        return Err(Error::Range {
            value: code.into(),
            min: (-max).into(),
            max: max.into(),
        });
    }
    Ok(f64::from(code) * WINDOW_STEP_VOLTS)
}

/// Continuous mains pickup on all channels, each with its own phase.
#[derive(Debug, Clone)]
pub struct MainsInjector {
    amplitude: f64,
    omega: f64,
    phases: Sample8,
    n: u64,
}

impl MainsInjector {
    pub fn new<R: Rng + ?Sized>(amplitude: f64, freq: f64, fs: f64, rng: &mut R) -> Result<Self> {
        if !(amplitude >= 0.0) {
            return Err(Error::Config(format!(
                "mains amplitude must be non-negative, got {amplitude}"
            )));
        }
        if !(fs > 0.0 && freq >= 0.0) {
            return Err(Error::Config(format!("bad mains frequency {freq} Hz at {fs} Hz")));
        }
        let phases = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
        Ok(Self {
            amplitude,
            omega: std::f64::consts::TAU * freq / fs,
            phases,
            n: 0,
        })
    }

    pub fn apply(&mut self, sample: &mut Sample8) {
        if self.amplitude > 0.0 {
            let w = self.omega * self.n as f64;
            for (x, phi) in sample.iter_mut().zip(&self.phases) {
                *x += self.amplitude * (w + phi).sin();
            }
        }
        self.n += 1;
    }
}

/// Adds `amplitude * sin(2 pi f t + phi)` to every channel of `samples`.
pub fn inject_mains<R: Rng + ?Sized>(
    samples: &mut [Sample8],
    amplitude: f64,
    freq: f64,
    fs: f64,
    rng: &mut R,
) -> Result<()> {
    let mut inj = MainsInjector::new(amplitude, freq, fs, rng)?;
    samples.iter_mut().for_each(|s| inj.apply(s));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_window, encode_window};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lsb_is_exact() {
        let spec = AdcSpec::default();
        assert_eq!(spec.lsb(), ADC_LSB_VOLTS);
        assert_eq!(spec.lsb() * (1u32 << 23) as f64, VREF);
        assert!((ADC_LSB_VOLTS * 1e6 - 0.53644).abs() < 1e-5);
    }

    #[test]
    fn quantize_examples() {
        let spec = AdcSpec::default();
        assert_eq!(adc_quantize(&spec, 0.0).value(), 0);
        assert_eq!(adc_quantize(&spec, 0.53644e-6).value(), 1);
        assert_eq!(adc_quantize(&spec, 5.0).value(), Raw24Sample::MAX);
        assert_eq!(adc_quantize(&spec, -5.0).value(), Raw24Sample::MIN);
        assert_eq!(adc_quantize(&spec, f64::NAN).value(), 0);
    }

    #[test]
    fn code_to_volts_examples() {
        assert_eq!(code_to_volts(0).unwrap(), 0.0);
        // 4.5 * 64 / 2^23 = 34.332275390625 uV, exact in binary.
        assert_eq!(code_to_volts(1).unwrap(), 34.332275390625e-6);
        assert!((code_to_volts(1).unwrap() * 1e6 - 34.33).abs() < 0.01);
        assert!((code_to_volts(511).unwrap() - 17.543792724609375e-3).abs() < 1e-15);
        assert!(code_to_volts(512).is_err());
        assert!(code_to_volts(-512).is_err());
        for c in 0..=511 {
            assert_eq!(code_to_volts(-c).unwrap(), -code_to_volts(c).unwrap());
        }
    }

    #[test]
    fn quantization_error_is_one_window_step() {
        let spec = AdcSpec::default();
        let mut v = -17.5e-3;
        while v <= 17.5e-3 {
            let c = decode_window(encode_window(adc_quantize(&spec, v)));
            let back = code_to_volts(c.into()).unwrap();
            assert!((back - v).abs() <= 34.34e-6, "v={v} back={back}");
            v += 0.37e-6;
        }
    }

    #[test]
    fn mains_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut zeros = vec![[0.0; CHANNELS]; 1000];
        inject_mains(&mut zeros, 0.0, 60.0, 1000.0, &mut rng).unwrap();
        assert!(zeros.iter().all(|s| s.iter().all(|&x| x == 0.0)));

        let a = 2e-3;
        let mut buf = vec![[0.0; CHANNELS]; 1000];
        inject_mains(&mut buf, a, 60.0, 1000.0, &mut rng).unwrap();
        for ch in 0..CHANNELS {
            let rms = (buf.iter().map(|s| s[ch] * s[ch]).sum::<f64>() / 1000.0).sqrt();
            assert!((rms - a / 2f64.sqrt()).abs() < 0.01 * a / 2f64.sqrt());
        }
        assert!(inject_mains(&mut buf, -1.0, 60.0, 1000.0, &mut rng).is_err());
    }
}
