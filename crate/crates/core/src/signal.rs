//! Sampled signal containers and exact sample-rate arithmetic.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// A real-valued waveform on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl SampledWaveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        check_rate(sample_rate)?;
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Complex optical envelope in sqrt(W) units.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalField {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    /// Carrier wavelength in metres.
    pub wavelength: f64,
}

impl OpticalField {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64, wavelength: f64) -> Result<Self> {
        check_rate(sample_rate)?;
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid(format!("wavelength must be positive, got {wavelength}")));
        }
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::invalid(format!("non-finite field sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            wavelength,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean optical power in W.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.sample_rate
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "sample rate must be positive and finite, got {rate}"
        )))
    }
}

/// Converts a rate in Hz to an exact integer. Rates in this crate are always
/// whole numbers of Hz so that resampling ratios stay rational.
pub fn integer_hz(rate: f64) -> Result<u64> {
    check_rate(rate)?;
    let rounded = rate.round();
    if (rate - rounded).abs() > 1e-3 || rounded > u64::MAX as f64 {
        return Err(Error::invalid(format!("rate {rate} Hz is not an integer number of Hz")));
    }
    Ok(rounded as u64)
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Reduced rational ratio `to / from = up / down` between two sample rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateRatio {
    pub up: u64,
    pub down: u64,
}

impl RateRatio {
    pub fn new(up: u64, down: u64) -> Result<Self> {
        if up == 0 || down == 0 {
            return Err(Error::invalid("rate ratio terms must be nonzero"));
        }
        let g = gcd(up, down);
        Ok(Self {
            up: up / g,
            down: down / g,
        })
    }

    pub fn between(from_hz: f64, to_hz: f64) -> Result<Self> {
        Self::new(integer_hz(to_hz)?, integer_hz(from_hz)?)
    }

    pub fn is_identity(&self) -> bool {
        self.up == 1 && self.down == 1
    }

    pub fn as_f64(&self) -> f64 {
        self.up as f64 / self.down as f64
    }
}
