use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Outcome of one validation experiment. Amplitudes in mV, MSE in mV².
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub experiment: String,
    pub input_peak_mv: Option<f64>,
    pub output_peak_mv: Option<f64>,
    /// `100 * output / input`.
    pub ratio_pct: Option<f64>,
    pub attenuation_db: Option<f64>,
    pub mse_mv2: Option<f64>,
    /// MSE against the unfiltered input, where one exists.
    pub mse_raw_mv2: Option<f64>,
    pub samples: usize,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            ..Self::default()
        }
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        let mut out = format!("experiment={}\n", self.experiment);
        let fields = [
            ("input_peak_mv", self.input_peak_mv),
            ("output_peak_mv", self.output_peak_mv),
            ("ratio_pct", self.ratio_pct),
            ("attenuation_db", self.attenuation_db),
            ("mse_mv2", self.mse_mv2),
            ("mse_raw_mv2", self.mse_raw_mv2),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                out.push_str(&format!("{k}={v:.9}\n"));
            }
        }
        out.push_str(&format!("samples={}\n", self.samples));
        for c in &self.checks {
            out.push_str(&format!("check.{}={}\n", c.name, if c.pass { "pass" } else { "fail" }));
        }
        out.push_str(&format!("pass={}\n", self.passed()));
        out
    }

    pub fn write_key_values(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        f.write_all(self.key_values().as_bytes())?;
        Ok(())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment     : {}", self.experiment)?;
        let rows = [
            ("input peak", self.input_peak_mv, "mV", 4),
            ("output peak", self.output_peak_mv, "mV", 4),
            ("ratio", self.ratio_pct, "%", 3),
            ("attenuation", self.attenuation_db, "dB", 4),
            ("mse (filtered)", self.mse_mv2, "mV^2", 9),
            ("mse (raw)", self.mse_raw_mv2, "mV^2", 9),
        ];
        for (name, v, unit, prec) in rows {
            if let Some(v) = v {
                writeln!(f, "{name:<15}: {v:.prec$} {unit}")?;
            }
        }
        writeln!(f, "samples        : {}", self.samples)?;
        for n in &self.notes {
            writeln!(f, "note           : {n}")?;
        }
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {}: {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        write!(f, "result         : {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}
