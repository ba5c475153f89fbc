//! Synthetic time-varying channel generation.
//!
//! Each tap is a Clarke-style sum of sinusoids: K unit-amplitude complex
//! exponentials whose Doppler shifts come from arrival angles drawn
//! uniformly on [0, 2pi). The resulting per-tap process is Rayleigh with
//! autocorrelation J0(2 pi f_d tau). Tap gains are given in dB and
//! normalized so the linear powers sum to one.

use crate::error::{Error, Result};
use crate::series::ChannelSeries;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Maximum Doppler shift v * f_c / c in Hz.
pub fn doppler_frequency(speed_mps: f64, carrier_freq_hz: f64) -> Result<f64> {
    if !speed_mps.is_finite() || speed_mps < 0.0 {
        return Err(Error::invalid("speed must be finite and >= 0"));
    }
    if !carrier_freq_hz.is_finite() || carrier_freq_hz <= 0.0 {
        return Err(Error::invalid("carrier frequency must be finite and > 0"));
    }
    Ok(speed_mps * carrier_freq_hz / SPEED_OF_LIGHT)
}

/// Distance travelled during `duration_s`, in carrier wavelengths
/// (T * f_d, dimensionless).
pub fn wavelength_span(duration_s: f64, speed_mps: f64, carrier_freq_hz: f64) -> Result<f64> {
    if !duration_s.is_finite() || duration_s < 0.0 {
        return Err(Error::invalid("duration must be finite and >= 0"));
    }
    Ok(duration_s * doppler_frequency(speed_mps, carrier_freq_hz)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadingConfig {
    pub carrier_freq_hz: f64,
    pub speed_mps: f64,
    pub sample_interval_s: f64,
    pub num_sinusoids: usize,
    pub num_taps: usize,
    pub tap_gains_db: Vec<f64>,
    pub duration_samples: usize,
    pub rng_seed: u64,
}

impl FadingConfig {
    /// Single-tap config with the library defaults (32 sinusoids).
    pub fn single_tap(
        carrier_freq_hz: f64,
        speed_mps: f64,
        sample_interval_s: f64,
        duration_samples: usize,
        rng_seed: u64,
    ) -> Self {
        Self {
            carrier_freq_hz,
            speed_mps,
            sample_interval_s,
            num_sinusoids: 32,
            num_taps: 1,
            tap_gains_db: vec![0.0],
            duration_samples,
            rng_seed,
        }
    }

    pub fn doppler_hz(&self) -> Result<f64> {
        doppler_frequency(self.speed_mps, self.carrier_freq_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_interval_s > 0.0) || !self.sample_interval_s.is_finite() {
            return Err(Error::invalid("sample_interval_s must be finite and > 0"));
        }
        if self.num_sinusoids < 1 {
            return Err(Error::invalid("num_sinusoids must be >= 1"));
        }
        if self.num_taps < 1 {
            return Err(Error::invalid("num_taps must be >= 1"));
        }
        if self.tap_gains_db.len() != self.num_taps {
            return Err(Error::invalid(format!(
                "tap_gains_db has {} entries, expected num_taps = {}",
                self.tap_gains_db.len(),
                self.num_taps
            )));
        }
        if self.duration_samples < 2 {
            return Err(Error::invalid("duration_samples must be >= 2"));
        }
        let fd = self.doppler_hz()?;
        if fd * self.sample_interval_s >= 0.5 {
            return Err(Error::invalid(format!(
                "Nyquist violation: f_d * interval = {} >= 0.5",
                fd * self.sample_interval_s
            )));
        }
        Ok(())
    }

    /// Per-tap linear powers, normalized to sum to one.
    pub fn linear_tap_gains(&self) -> Vec<f64> {
        let linear: Vec<f64> = self
            .tap_gains_db
            .iter()
            .map(|db| 10f64.powf(db / 10.0))
            .collect();
        let total: f64 = linear.iter().sum();
        linear.iter().map(|g| g / total).collect()
    }
}

/// Generates one tap as a sum of `num_sinusoids` complex exponentials.
/// Angles and phases are drawn from a ChaCha stream seeded with
/// `rng_seed ^ tap_index`, so taps are independent and reproducible.
pub fn generate_tap(config: &FadingConfig, tap_index: usize) -> Result<ChannelSeries> {
    config.validate()?;
    if tap_index >= config.num_taps {
        return Err(Error::invalid(format!(
            "tap_index {} out of range (num_taps = {})",
            tap_index, config.num_taps
        )));
    }
    let fd = config.doppler_hz()?;
    let gain = config.linear_tap_gains()[tap_index];
    let amp = (gain / config.num_sinusoids as f64).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ tap_index as u64);
    let k = config.num_sinusoids;
    let mut omegas = Vec::with_capacity(k);
    let mut phases = Vec::with_capacity(k);
    for _ in 0..k {
        let alpha: f64 = rng.gen::<f64>() * TAU;
        let phi: f64 = rng.gen::<f64>() * TAU;
        omegas.push(TAU * fd * alpha.cos());
        phases.push(phi);
    }

    let dt = config.sample_interval_s;
    let mut samples = Vec::with_capacity(config.duration_samples);
    for n in 0..config.duration_samples {
        let t = n as f64 * dt;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..k {
            let theta = omegas[i] * t + phases[i];
            acc += Complex64::new(theta.cos(), theta.sin());
        }
        samples.push(acc * amp);
    }
    ChannelSeries::new(samples, dt, format!("tap{tap_index}"))
}

/// Sum of all taps: the flat-fading composite with unit total power.
pub fn generate_channel(config: &FadingConfig) -> Result<ChannelSeries> {
    config.validate()?;
    let mut total = vec![Complex64::new(0.0, 0.0); config.duration_samples];
    for tap in 0..config.num_taps {
        let series = generate_tap(config, tap)?;
        for (acc, s) in total.iter_mut().zip(&series.samples) {
            *acc += s;
        }
    }
    ChannelSeries::new(total, config.sample_interval_s, "channel")
}

/// Adds circularly-symmetric complex Gaussian noise at the given SNR.
/// `snr_db = f64::INFINITY` is the no-noise sentinel and returns the input
/// unchanged.
pub fn add_noise(series: &ChannelSeries, snr_db: f64, rng_seed: u64) -> Result<ChannelSeries> {
    if series.is_empty() {
        return Err(Error::invalid("cannot add noise to an empty series"));
    }
    if snr_db == f64::INFINITY {
        return Ok(series.clone());
    }
    let noise_var = series.mean_power() / 10f64.powf(snr_db / 10.0);
    let sigma = (noise_var / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let samples = series
        .samples
        .iter()
        .map(|s| s + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    ChannelSeries::new(samples, series.sample_interval_s, series.label.clone())
}
