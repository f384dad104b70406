//! Eight-channel signal generators feeding the simulated front end.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::CHANNELS;
use crate::error::{Error, Result};
use crate::signal_chain::{Biquad, Filter, Sample8};

/// Produces one 8-channel sample per call at the rate it was built for.
pub trait Source: Send {
    /// `None` once a finite source is exhausted.
    fn next_sample(&mut self) -> Option<Sample8>;

    /// Samples left, or `None` for an endless source.
    fn remaining(&self) -> Option<u64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineParams {
    pub freq_hz: f64,
    pub amplitude_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    /// One entry broadcast to every channel, or exactly eight.
    Sine(Vec<SineParams>),
    Replay(ReplaySpec),
    Gesture(GestureScript),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySpec {
    pub path: PathBuf,
    pub gain: f64,
    /// Rate for files without a time column.
    pub rate_hz: Option<f64>,
}

impl SourceSpec {
    pub fn sine(freq_hz: f64, amplitude_v: f64) -> Self {
        Self::Sine(vec![SineParams {
            freq_hz,
            amplitude_v,
        }])
    }

    pub fn zero() -> Self {
        Self::sine(1.0, 0.0)
    }

    pub fn replay(path: impl Into<PathBuf>) -> Self {
        Self::Replay(ReplaySpec {
            path: path.into(),
            gain: 1.0,
            rate_hz: None,
        })
    }
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Sine(chs) => {
                let parts: Vec<String> = chs
                    .iter()
                    .map(|p| format!("{},{}", p.freq_hz, p.amplitude_v))
                    .collect();
                write!(f, "sine:{}", parts.join(";"))
            }
            SourceSpec::Replay(r) => write!(f, "replay:{}", r.path.display()),
            SourceSpec::Gesture(_) => f.write_str("gesture"),
        }
    }
}

/// Parses `sine:F,A[;F,A...]`, `replay:PATH`, `gesture` or `gesture:SCRIPT.json`.
impl FromStr for SourceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "sine" => {
                let chs = arg
                    .split(';')
                    .map(|pair| {
                        let (f, a) = pair.split_once(',').ok_or_else(|| {
                            Error::Config(format!("sine expects FREQ,AMPLITUDE, got {pair:?}"))
                        })?;
                        let parse = |v: &str| {
                            v.trim()
                                .parse::<f64>()
                                .map_err(|e| Error::Config(format!("bad number {v:?}: {e}")))
                        };
                        Ok(SineParams {
                            freq_hz: parse(f)?,
                            amplitude_v: parse(a)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let spec = SourceSpec::Sine(chs);
                spec.validate()?;
                Ok(spec)
            }
            "replay" if !arg.is_empty() => Ok(SourceSpec::replay(arg)),
            "gesture" if arg.is_empty() => Ok(SourceSpec::Gesture(GestureScript::default())),
            "gesture" => Ok(SourceSpec::Gesture(GestureScript::load(Path::new(arg))?)),
            _ => Err(Error::Config(format!(
                "unknown source {s:?} (expected sine:F,A | replay:PATH | gesture[:SCRIPT])"
            ))),
        }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SourceSpec::Sine(chs) => {
                if chs.len() != 1 && chs.len() != CHANNELS {
                    return Err(Error::Config(format!(
                        "sine needs 1 or {CHANNELS} channel entries, got {}",
                        chs.len()
                    )));
                }
                if chs
                    .iter()
                    .any(|p| !(p.freq_hz >= 0.0 && p.amplitude_v >= 0.0 && p.amplitude_v.is_finite()))
                {
                    return Err(Error::Config("sine frequency and amplitude must be >= 0".into()));
                }
                Ok(())
            }
            SourceSpec::Replay(r) => {
                if !r.gain.is_finite() {
                    return Err(Error::Config("replay gain must be finite".into()));
                }
                if let Some(rate) = r.rate_hz {
                    if !(rate > 0.0) {
                        return Err(Error::Config("replay rate must be positive".into()));
                    }
                }
                Ok(())
            }
            SourceSpec::Gesture(g) => g.validate(),
        }
    }
}

/// Builds a generator running at `fs` Hz. Random sources are seeded from `seed`.
pub fn make_source(spec: &SourceSpec, fs: f64, seed: u64) -> Result<Box<dyn Source>> {
    spec.validate()?;
    Ok(match spec {
        SourceSpec::Sine(chs) => Box::new(SineSource::new(chs, fs)),
        SourceSpec::Replay(r) => {
            let data = ReplayData::load(&r.path, r.rate_hz)?;
            Box::new(ReplaySource::new(Arc::new(data), r.gain, fs))
        }
        SourceSpec::Gesture(script) => Box::new(GestureSource::new(script, fs, seed)?),
    })
}

pub struct SineSource {
    params: [SineParams; CHANNELS],
    fs: f64,
    n: u64,
}

impl SineSource {
    pub fn new(chs: &[SineParams], fs: f64) -> Self {
        let params = std::array::from_fn(|i| chs[i % chs.len()]);
        Self { params, fs, n: 0 }
    }
}

impl Source for SineSource {
    fn next_sample(&mut self) -> Option<Sample8> {
        let t = self.n as f64 / self.fs;
        self.n += 1;
        Some(std::array::from_fn(|i| {
            let p = self.params[i];
            p.amplitude_v * (std::f64::consts::TAU * p.freq_hz * t).sin()
        }))
    }

    fn remaining(&self) -> Option<u64> {
        None
    }
}

/// A recording held in memory, in volts.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayData {
    pub rate_hz: f64,
    pub samples: Vec<Sample8>,
    /// Channel count found in the file before broadcasting.
    pub file_channels: usize,
}

const TIME_HEADERS: [&str; 5] = ["t", "t_s", "time", "time_s", "timestamp"];

fn unit_scale(header: &str) -> f64 {
    let h = header.trim().to_ascii_lowercase();
    if h.ends_with("_mv") || h.ends_with("(mv)") {
        1e-3
    } else if h.ends_with("_uv") || h.ends_with("(uv)") {
        1e-6
    } else {
        1.0
    }
}

impl ReplayData {
    pub fn from_samples(samples: Vec<Sample8>, rate_hz: f64) -> Self {
        Self {
            rate_hz,
            samples,
            file_channels: CHANNELS,
        }
    }

    /// Reads a numeric CSV. A header row is optional; with one, a leading
    /// time column (`t`, `t_s`, `time`, ...) sets the rate and `_mV`/`_uV`
    /// suffixes set units. Without a time column `rate_hz` is used
    /// (default 1000). One column is broadcast to all eight channels; two to
    /// seven fill the leading channels and leave the rest at zero.
    pub fn load(path: &Path, rate_hz: Option<f64>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(file, rate_hz)
    }

    pub fn parse<R: std::io::Read>(reader: R, rate_hz: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(false)
            .from_reader(reader);

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut header: Option<Vec<String>> = None;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(vals) => rows.push(vals),
                Err(_) if i == 0 => header = Some(rec.iter().map(str::to_owned).collect()),
                Err(e) => {
                    return Err(Error::Format(format!("row {}: {e}", i + 1)));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Format("replay file has no samples".into()));
        }

        let ncols = rows[0].len();
        let has_time = header
            .as_ref()
            .and_then(|h| h.first())
            .is_some_and(|h| TIME_HEADERS.contains(&h.trim().to_ascii_lowercase().as_str()));
        let first_ch = usize::from(has_time);
        let nch = ncols - first_ch;
        if nch == 0 {
            return Err(Error::Format("replay file has no signal column".into()));
        }
        let scales: Vec<f64> = match &header {
            Some(h) => h[first_ch..].iter().map(|s| unit_scale(s)).collect(),
            None => vec![1.0; nch],
        };

        let rate = if has_time {
            if rows.len() < 2 {
                return Err(Error::Format("need two rows to infer a sample rate".into()));
            }
            let span = rows[rows.len() - 1][0] - rows[0][0];
            if !(span > 0.0) {
                return Err(Error::Format("time column must increase".into()));
            }
            (rows.len() - 1) as f64 / span
        } else {
            rate_hz.unwrap_or(1000.0)
        };
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Config(format!("bad replay rate {rate}")));
        }

        let samples = rows
            .iter()
            .map(|r| {
                let chs = &r[first_ch..];
                std::array::from_fn(|c| match nch {
                    1 => chs[0] * scales[0],
                    _ if c < nch => chs[c] * scales[c],
                    _ => 0.0,
                })
            })
            .collect();
        Ok(Self {
            rate_hz: rate,
            samples,
            file_channels: nch,
        })
    }

    pub fn duration_s(&self) -> f64 {
        (self.samples.len().saturating_sub(1)) as f64 / self.rate_hz
    }
}

/// Linear-interpolation resampler over a [`ReplayData`].
pub struct ReplaySource {
    data: Arc<ReplayData>,
    gain: f64,
    step: f64,
    n: u64,
    total: u64,
}

impl ReplaySource {
    pub fn new(data: Arc<ReplayData>, gain: f64, fs: f64) -> Self {
        let step = data.rate_hz / fs;
        let last = data.samples.len().saturating_sub(1) as f64;
        let total = if data.samples.is_empty() {
            0
        } else {
            (last / step + 1e-9).floor() as u64 + 1
        };
        Self {
            data,
            gain,
            step,
            n: 0,
            total,
        }
    }
}

impl Source for ReplaySource {
    fn next_sample(&mut self) -> Option<Sample8> {
        if self.n >= self.total {
            return None;
        }
        let pos = self.n as f64 * self.step;
        self.n += 1;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let s = &self.data.samples;
        let a = s[i];
        let b = s.get(i + 1).copied().unwrap_or(a);
        Some(std::array::from_fn(|c| {
            self.gain * (a[c] + frac * (b[c] - a[c]))
        }))
    }

    fn remaining(&self) -> Option<u64> {
        Some(self.total - self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureSegment {
    pub duration_s: f64,
    /// Channel numbers 1..=8 that contract during this segment.
    #[serde(default)]
    pub active: Vec<u8>,
    /// Approximate burst peak in volts (three standard deviations).
    #[serde(default)]
    pub amplitude_v: f64,
}

/// Timed rest/contract pattern rendered as band-limited noise bursts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureScript {
    pub segments: Vec<GestureSegment>,
    #[serde(default = "GestureScript::default_rest_rms")]
    pub rest_rms_v: f64,
    #[serde(default = "GestureScript::default_band")]
    pub band_hz: (f64, f64),
    #[serde(default = "GestureScript::default_ramp")]
    pub ramp_s: f64,
}

impl Default for GestureScript {
    /// Six seconds: a triceps burst on channels 5-6 (~5 mV) and a biceps
    /// burst on channels 1-2 (~2 mV), separated by rest.
    fn default() -> Self {
        let rest = |d| GestureSegment {
            duration_s: d,
            active: vec![],
            amplitude_v: 0.0,
        };
        Self {
            segments: vec![
                rest(1.0),
                GestureSegment {
                    duration_s: 1.5,
                    active: vec![5, 6],
                    amplitude_v: 5e-3,
                },
                rest(1.0),
                GestureSegment {
                    duration_s: 1.5,
                    active: vec![1, 2],
                    amplitude_v: 2e-3,
                },
                rest(1.0),
            ],
            rest_rms_v: Self::default_rest_rms(),
            band_hz: Self::default_band(),
            ramp_s: Self::default_ramp(),
        }
    }
}

impl GestureScript {
    fn default_rest_rms() -> f64 {
        10e-6
    }

    fn default_band() -> (f64, f64) {
        (20.0, 150.0)
    }

    fn default_ramp() -> f64 {
        0.05
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        let script: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        script.validate()?;
        Ok(script)
    }

    pub fn total_duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.iter().any(|s| !(s.duration_s >= 0.0)) {
            return Err(Error::Config("gesture segment durations must be >= 0".into()));
        }
        if !(self.total_duration_s() > 0.0) {
            return Err(Error::Config("gesture script must last longer than 0 s".into()));
        }
        if self
            .segments
            .iter()
            .flat_map(|s| &s.active)
            .any(|&c| c == 0 || usize::from(c) > CHANNELS)
        {
            return Err(Error::Config("gesture channels are numbered 1..=8".into()));
        }
        let (lo, hi) = self.band_hz;
        if !(lo > 0.0 && lo < hi) || self.rest_rms_v < 0.0 || self.ramp_s < 0.0 {
            return Err(Error::Config("bad gesture band, rest level or ramp".into()));
        }
        Ok(())
    }

    /// Segment index and the time offset within it, or `None` past the end.
    fn locate(&self, t: f64) -> Option<(usize, f64, f64)> {
        let mut start = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if t < start + s.duration_s {
                return Some((i, t - start, s.duration_s));
            }
            start += s.duration_s;
        }
        None
    }

    /// Burst standard deviation for channel index `ch` at time `t`.
    fn burst_sigma(&self, ch: usize, t: f64) -> f64 {
        let Some((i, into, len)) = self.locate(t) else {
            return 0.0;
        };
        let seg = &self.segments[i];
        if !seg.active.contains(&((ch + 1) as u8)) {
            return 0.0;
        }
        let ramp = |x: f64| {
            if self.ramp_s <= 0.0 {
                1.0
            } else {
                let u = (x / self.ramp_s).clamp(0.0, 1.0);
                0.5 - 0.5 * (std::f64::consts::PI * u).cos()
            }
        };
        seg.amplitude_v / 3.0 * ramp(into).min(ramp(len - into))
    }
}

struct ShapedNoise {
    hp: Biquad,
    lp1: Biquad,
    lp2: Biquad,
    scale: f64,
}

impl ShapedNoise {
    fn new(band: (f64, f64), fs: f64) -> Self {
        Self {
            hp: Biquad::butterworth_highpass(band.0, fs),
            lp1: Biquad::butterworth_lowpass(band.1, fs),
            lp2: Biquad::butterworth_lowpass(band.1, fs),
            scale: 1.0,
        }
    }

    fn next<R: Rng>(&mut self, rng: &mut R) -> f64 {
        let w: f64 = rng.sample(StandardNormal);
        self.scale * self.lp2.process(self.lp1.process(self.hp.process(w)))
    }
}

/// Band-limited noise with a per-channel envelope following a [`GestureScript`].
pub struct GestureSource {
    script: GestureScript,
    fs: f64,
    rng: ChaCha8Rng,
    noise: Vec<ShapedNoise>,
    n: u64,
    total: u64,
}

impl GestureSource {
    pub fn new(script: &GestureScript, fs: f64, seed: u64) -> Result<Self> {
        script.validate()?;
        if script.band_hz.1 >= fs / 2.0 {
            return Err(Error::Config("gesture band exceeds Nyquist".into()));
        }
        // Calibrate the shaping filter to unit RMS on an independent stream.
        let mut cal_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_CA11);
        let mut cal = ShapedNoise::new(script.band_hz, fs);
        let warm = (0.5 * fs) as usize;
        let len = (4.0 * fs) as usize;
        let mut acc = 0.0;
        for i in 0..warm + len {
            let y = cal.next(&mut cal_rng);
            if i >= warm {
                acc += y * y;
            }
        }
        let scale = 1.0 / (acc / len as f64).sqrt();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noise: Vec<ShapedNoise> = (0..CHANNELS)
            .map(|_| {
                let mut n = ShapedNoise::new(script.band_hz, fs);
                n.scale = scale;
                n
            })
            .collect();
        // Run the shapers past their start-up transient.
        for _ in 0..warm {
            for n in noise.iter_mut() {
                n.next(&mut rng);
            }
        }
        Ok(Self {
            script: script.clone(),
            fs,
            rng,
            noise,
            n: 0,
            total: (script.total_duration_s() * fs).round() as u64,
        })
    }
}

impl Source for GestureSource {
    fn next_sample(&mut self) -> Option<Sample8> {
        if self.n >= self.total {
            return None;
        }
        let t = self.n as f64 / self.fs;
        self.n += 1;
        let mut out = [0.0; CHANNELS];
        for (c, (o, shaper)) in out.iter_mut().zip(self.noise.iter_mut()).enumerate() {
            let sigma = self.script.rest_rms_v + self.script.burst_sigma(c, t);
            *o = sigma * shaper.next(&mut self.rng);
        }
        Some(out)
    }

    fn remaining(&self) -> Option<u64> {
        Some(self.total - self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(src: &mut dyn Source, n: usize) -> Vec<Sample8> {
        (0..n).map_while(|_| src.next_sample()).collect()
    }

    #[test]
    fn sine_peak_and_zero() {
        let mut s = make_source(&SourceSpec::sine(1.0, 17.63e-3), 16_000.0, 0).unwrap();
        let xs = collect(s.as_mut(), 16_000);
        let peak = xs.iter().map(|x| x[0]).fold(f64::MIN, f64::max);
        assert!((peak - 17.63e-3).abs() <= 17.63e-3 * 1e-3);

        let mut z = make_source(&SourceSpec::sine(5.0, 0.0), 1000.0, 0).unwrap();
        assert!(collect(z.as_mut(), 500).iter().all(|x| x.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn source_spec_parsing() {
        assert_eq!("sine:1,0.01763".parse::<SourceSpec>().unwrap(), SourceSpec::sine(1.0, 0.01763));
        assert!(matches!("gesture".parse::<SourceSpec>().unwrap(), SourceSpec::Gesture(_)));
        assert!(matches!("replay:/tmp/x.csv".parse::<SourceSpec>().unwrap(), SourceSpec::Replay(_)));
        assert!("sine:1".parse::<SourceSpec>().is_err());
        assert!("sine:1,2;3,4".parse::<SourceSpec>().is_err());
        assert!("sine:1,-2".parse::<SourceSpec>().is_err());
        assert!("noise".parse::<SourceSpec>().is_err());
    }

    #[test]
    fn gesture_bursts_stand_out() {
        let script = GestureScript::default();
        let fs = 16_000.0;
        let mut g = GestureSource::new(&script, fs, 7).unwrap();
        let xs = collect(&mut g, usize::MAX);
        assert_eq!(xs.len(), (6.0 * fs) as usize);
        let rms = |ch: usize, a: f64, b: f64| {
            let seg = &xs[(a * fs) as usize..(b * fs) as usize];
            (seg.iter().map(|x| x[ch] * x[ch]).sum::<f64>() / seg.len() as f64).sqrt()
        };
        // Channel 6 contracts in 1.0..2.5 s, channel 2 in 3.5..5.0 s.
        let rest6 = rms(5, 0.0, 1.0);
        let burst6 = rms(5, 1.1, 2.4);
        assert!(burst6 >= 10.0 * rest6, "{burst6} vs {rest6}");
        let burst2 = rms(1, 3.6, 4.9);
        assert!(burst2 >= 10.0 * rms(1, 5.0, 6.0));
        assert!((burst6 - 5e-3 / 3.0).abs() < 0.25 * 5e-3 / 3.0);
        // Deterministic per seed.
        let mut again = GestureSource::new(&script, fs, 7).unwrap();
        assert_eq!(collect(&mut again, 100), xs[..100].to_vec());
    }

    #[test]
    fn gesture_script_validation() {
        let mut s = GestureScript::default();
        s.segments[1].active = vec![9];
        assert!(s.validate().is_err());
        let empty = GestureScript {
            segments: vec![],
            ..GestureScript::default()
        };
        assert!(empty.validate().is_err());
        let json = r#"{"segments":[{"duration_s":2.0,"active":[3],"amplitude_v":0.004}]}"#;
        let parsed: GestureScript = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.total_duration_s(), 2.0);
        assert_eq!(parsed.rest_rms_v, 10e-6);
    }

    #[test]
    fn replay_csv_variants() {
        let with_time = "t_s,ch1_mV,ch2_mV\n0.000,1.0,2.0\n0.001,3.0,4.0\n0.002,5.0,6.0\n";
        let d = ReplayData::parse(with_time.as_bytes(), None).unwrap();
        assert!((d.rate_hz - 1000.0).abs() < 1e-9);
        assert_eq!(d.file_channels, 2);
        assert_eq!(d.samples[1][0], 3.0e-3);
        assert_eq!(d.samples[1][1], 4.0e-3);
        assert_eq!(d.samples[1][2], 0.0);

        let single = "0.5\n-0.25\n";
        let d = ReplayData::parse(single.as_bytes(), Some(500.0)).unwrap();
        assert_eq!(d.rate_hz, 500.0);
        assert_eq!(d.samples[0], [0.5; CHANNELS]);

        assert!(ReplayData::parse("".as_bytes(), None).is_err());
        assert!(ReplayData::parse("a,b\n1,x\n".as_bytes(), None).is_err());
        assert!(ReplayData::parse("1,2\n3\n".as_bytes(), None).is_err());
        assert!(matches!(
            ReplayData::load(Path::new("/nonexistent/emg.csv"), None),
            Err(Error::File { .. })
        ));
    }

    #[test]
    fn replay_interpolates() {
        let data = ReplayData::from_samples(vec![[0.0; CHANNELS], [1.0; CHANNELS]], 1000.0);
        let mut r = ReplaySource::new(Arc::new(data), 2.0, 4000.0);
        let xs = collect(&mut r, 100);
        let ch0: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        assert_eq!(ch0, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(r.remaining(), Some(0));
    }
}
