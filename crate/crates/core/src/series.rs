//! Complex channel-coefficient time series and the CSF text format.
//!
//! A series is a uniformly sampled sequence of complex channel gains.
//! The CSF format is line-oriented UTF-8: a single header
//! `# csf v1 interval_s=<float> label=<text>` followed by one
//! `<real> <imag>` pair per line.

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    pub samples: Vec<Complex64>,
    pub sample_interval_s: f64,
    pub label: String,
}

impl ChannelSeries {
    /// Builds a series, rejecting non-finite samples and non-positive intervals.
    pub fn new(samples: Vec<Complex64>, sample_interval_s: f64, label: impl Into<String>) -> Result<Self> {
        if !(sample_interval_s > 0.0) || !sample_interval_s.is_finite() {
            return Err(Error::invalid("sample_interval_s must be finite and > 0"));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::invalid("series contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_interval_s,
            label: label.into(),
        })
    }

    /// Like [`ChannelSeries::new`] but additionally requires at least two
    /// samples, the contract for series entering the tokenization path.
    pub fn validated(samples: Vec<Complex64>, sample_interval_s: f64, label: impl Into<String>) -> Result<Self> {
        let s = Self::new(samples, sample_interval_s, label)?;
        if s.samples.len() < 2 {
            return Err(Error::invalid("series must contain at least 2 samples"));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of |h|^2 over the series.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Scales the series to unit mean power; returns the scaled series and
    /// the RMS factor that was divided out (multiply back to undo).
    pub fn normalize_to_unit_power(&self) -> Result<(ChannelSeries, f64)> {
        let p = self.mean_power();
        if p <= 0.0 {
            return Err(Error::invalid("cannot normalize an all-zero series"));
        }
        let rms = p.sqrt();
        let samples = self.samples.iter().map(|s| s / rms).collect();
        Ok((
            ChannelSeries {
                samples,
                sample_interval_s: self.sample_interval_s,
                label: self.label.clone(),
            },
            rms,
        ))
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> ChannelSeries {
        ChannelSeries {
            samples: self.samples.iter().map(|s| s * factor).collect(),
            sample_interval_s: self.sample_interval_s,
            label: self.label.clone(),
        }
    }

    /// Keeps every `step`-th sample, phased so the last sample is retained.
    /// The result's interval is `step` times the source interval.
    pub fn decimate_keep_last(&self, step: usize) -> Result<ChannelSeries> {
        if step == 0 {
            return Err(Error::invalid("decimation step must be >= 1"));
        }
        if self.samples.is_empty() {
            return Err(Error::invalid("cannot decimate an empty series"));
        }
        let start = (self.samples.len() - 1) % step;
        let samples: Vec<Complex64> = self.samples[start..].iter().step_by(step).copied().collect();
        ChannelSeries::new(samples, self.sample_interval_s * step as f64, self.label.clone())
    }

    pub fn to_csf_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# csf v1 interval_s={} label={}",
            self.sample_interval_s, self.label
        );
        for s in &self.samples {
            let _ = writeln!(out, "{} {}", s.re, s.im);
        }
        out
    }

    pub fn write_csf(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csf_string().as_bytes())?;
        Ok(())
    }

    pub fn from_csf_str(text: &str) -> Result<ChannelSeries> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty file, expected csf header"))?;
        let rest = header
            .strip_prefix("# csf v1 ")
            .ok_or_else(|| Error::parse(1, "expected header '# csf v1 interval_s=<float> label=<text>'"))?;
        let rest = rest
            .strip_prefix("interval_s=")
            .ok_or_else(|| Error::parse(1, "missing interval_s field in header"))?;
        let (interval_str, label_part) = rest
            .split_once(" label=")
            .ok_or_else(|| Error::parse(1, "missing label field in header"))?;
        let interval: f64 = interval_str
            .parse()
            .map_err(|_| Error::parse(1, format!("bad interval_s value '{interval_str}'")))?;

        let mut samples = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let re: f64 = parts
                .next()
                .ok_or_else(|| Error::parse(idx + 1, "missing real part"))?
                .parse()
                .map_err(|_| Error::parse(idx + 1, "bad real part"))?;
            let im: f64 = parts
                .next()
                .ok_or_else(|| Error::parse(idx + 1, "missing imaginary part"))?
                .parse()
                .map_err(|_| Error::parse(idx + 1, "bad imaginary part"))?;
            if parts.next().is_some() {
                return Err(Error::parse(idx + 1, "expected exactly two values per line"));
            }
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::parse(idx + 1, "non-finite sample"));
            }
            samples.push(Complex64::new(re, im));
        }
        ChannelSeries::new(samples, interval, label_part)
    }

    pub fn read_csf(path: impl AsRef<Path>) -> Result<ChannelSeries> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_csf_str(&text)
    }
}
